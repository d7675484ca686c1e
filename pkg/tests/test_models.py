import math

import numpy as np
import pytest

from oracles import g_function_scalar, ishigami_scalar, lame_hoop
from sobolgp.design import DesignMatrix, Frame, ParameterSpace, lhs_sample, to_physical
from sobolgp.exceptions import GeometryError, IngestionError, ModelEvaluationError, ValidationError
from sobolgp.models import (
    FunctionModel,
    GFunction,
    Ishigami,
    PressureBin,
    PressureBinParams,
    SampleSource,
    export_sample_set,
    g_function,
    generate_sample_set,
    ingest,
    ishigami,
    make_builtin,
    pressure_bin_space,
    pressure_bin_standin,
)


class TestIshigami:
    @pytest.mark.parametrize("theta,expected", [
        ((0, 0, 0), 0.0),
        ((math.pi / 2, 0, 0), 1.0),
        ((math.pi / 2, math.pi / 2, 1), 8.1),
    ])
    def test_examples(self, theta, expected):
        assert ishigami(np.array(theta, dtype=float)) == pytest.approx(expected, abs=1e-14)

    def test_matches_scalar_oracle(self):
        X = np.random.default_rng(0).uniform(-math.pi, math.pi, (1000, 3))
        ref = np.array([ishigami_scalar(*row) for row in X])
        np.testing.assert_allclose(Ishigami()(X), ref, rtol=1e-12, atol=1e-12)


class TestGFunction:
    def test_midpoint(self):
        assert g_function(np.full(3, 0.5), np.array([0.0, 1.0, 2.0])) == 0.0
        a = np.array([1.0, 2.0])
        assert g_function(np.full(2, 0.5), a) == pytest.approx(np.prod(a / (1 + a)))

    def test_origin(self):
        a = np.array([0.0, 1.0, 4.5])
        assert g_function(np.zeros(3), a) == pytest.approx(np.prod((2 + a) / (1 + a)))

    def test_two_dim_example(self):
        assert g_function(np.array([0.25, 0.75]), np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_negative_coefficient(self):
        with pytest.raises(ValidationError):
            g_function(np.array([0.5]), np.array([-1.0]))
        with pytest.raises(ValidationError):
            GFunction(a=(1.0, -0.5))

    def test_matches_scalar_oracle(self):
        a = (0.0, 1.0, 4.5, 9.0)
        X = np.random.default_rng(1).random((1000, 4))
        ref = np.array([g_function_scalar(row, a) for row in X])
        np.testing.assert_allclose(GFunction(a)(X), ref, rtol=1e-12, atol=1e-12)


class TestPressureBin:
    def test_origin_is_pure_lame(self):
        assert pressure_bin_standin(0.0, 0.0) == pytest.approx(lame_hoop(11.6, 12.9, 50.0), rel=1e-14)
        assert pressure_bin_standin(0.0, 0.0) == pytest.approx(472.4, abs=0.1)

    def test_full_tilt(self):
        t_min = 1.3 - 70 * math.tan(math.radians(0.25))
        assert t_min == pytest.approx(0.9945, abs=1e-4)
        assert pressure_bin_standin(0.25, 0.0) == pytest.approx(lame_hoop(11.6, 11.6 + t_min, 50.0), rel=1e-14)

    def test_corner_ratio_in_band(self):
        ratio = pressure_bin_standin(0.25, 1.0) / pressure_bin_standin(0.0, 0.0)
        assert 1.15 <= ratio <= 1.35

    def test_strictly_increasing_on_grid(self):
        phi, h = np.meshgrid(np.linspace(0, 0.25, 50), np.linspace(0, 1, 50), indexing="ij")
        r = pressure_bin_standin(phi, h)
        assert np.all(np.diff(r, axis=0) > 0)
        assert np.all(np.diff(r, axis=1) > 0)

    def test_infeasible_geometry(self):
        with pytest.raises(GeometryError):
            pressure_bin_standin(3.0, 0.0)
        with pytest.raises(GeometryError):
            PressureBin(PressureBinParams(nominal_min_wall=0.2))

    def test_metadata_only_material_constants(self):
        a = pressure_bin_standin(0.1, 0.5, PressureBinParams(youngs_modulus=1.0, poisson_ratio=0.1))
        assert a == pressure_bin_standin(0.1, 0.5)

    def test_space(self):
        sp = pressure_bin_space()
        assert sp.names == ["angle_of_attack_deg", "additional_indentation_mm"]
        np.testing.assert_array_equal(sp.upper, [0.25, 1.0])


class TestRegistry:
    def test_builtins(self):
        assert isinstance(make_builtin("ishigami"), Ishigami)
        assert make_builtin("pressure_bin", {"pressure": 60.0}).params.pressure == 60.0
        assert make_builtin("g_function").space.dim == 4

    def test_unknown(self):
        with pytest.raises(ValidationError):
            make_builtin("nope")
        with pytest.raises(ValidationError):
            make_builtin("ishigami", {"zeta": 1})


class TestGenerate:
    def test_pressure_bin_design(self):
        sp = pressure_bin_space()
        design = to_physical(lhs_sample(sp, 100, seed=1))
        s = generate_sample_set(PressureBin(), design, seed=1)
        assert len(s) == 100
        assert s.source is SampleSource.GENERATED
        assert np.all(s.responses.values >= pressure_bin_standin(0.0, 0.0))
        again = generate_sample_set(PressureBin(), design, n_jobs=4)
        np.testing.assert_array_equal(again.responses.values, s.responses.values)

    def test_empty_design(self):
        design = DesignMatrix(np.empty((0, 2)), Frame.PHYSICAL, pressure_bin_space())
        assert len(generate_sample_set(PressureBin(), design)) == 0

    def test_failure_pinned_to_row(self):
        sp = ParameterSpace.from_bounds([(0, 1)])

        def f(X):
            if np.any(X[:, 0] > 0.5):
                raise RuntimeError("solver diverged")
            return X[:, 0]

        design = DesignMatrix([[0.1], [0.2], [0.7]], Frame.PHYSICAL, sp)
        with pytest.raises(ModelEvaluationError) as exc:
            generate_sample_set(FunctionModel(f, sp), design)
        assert exc.value.row == 2

    def test_non_finite_pinned_to_row(self):
        sp = ParameterSpace.from_bounds([(0, 1)])
        model = FunctionModel(lambda X: np.where(X[:, 0] > 0.5, np.nan, 1.0), sp)
        with pytest.raises(ModelEvaluationError) as exc:
            generate_sample_set(model, DesignMatrix([[0.1], [0.9]], Frame.PHYSICAL, sp))
        assert exc.value.row == 1

    def test_space_mismatch(self):
        design = to_physical(lhs_sample(ParameterSpace.from_bounds([(0, 1)] * 2), 3, seed=0))
        with pytest.raises(ValidationError):
            generate_sample_set(PressureBin(), design)


def write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def sample_files(tmp_path):
    sp = pressure_bin_space()
    s = generate_sample_set(PressureBin(), to_physical(lhs_sample(sp, 100, seed=3)))
    d, r = tmp_path / "design.csv", tmp_path / "responses.csv"
    export_sample_set(s, d, r)
    return sp, s, d, r


class TestIngest:
    def test_round_trip_bit_identical(self, sample_files):
        sp, s, d, r = sample_files
        back = ingest(d, r, sp)
        assert len(back) == 100
        assert back.source is SampleSource.INGESTED
        np.testing.assert_array_equal(back.design.values, s.design.values)
        np.testing.assert_array_equal(back.responses.values, s.responses.values)
        assert back.sample_ids == s.sample_ids

    def test_missing_id_named(self, sample_files):
        sp, _, d, r = sample_files
        lines = r.read_text().splitlines()
        write(r, [ln for ln in lines if not ln.startswith("37,")])
        with pytest.raises(IngestionError, match="37"):
            ingest(d, r, sp)

    def test_duplicate_id(self, sample_files):
        sp, _, d, r = sample_files
        lines = r.read_text().splitlines()
        write(r, lines + [lines[1]])
        with pytest.raises(IngestionError, match="duplicate"):
            ingest(d, r, sp)

    def test_nan_response_reports_row(self, sample_files):
        sp, _, d, r = sample_files
        lines = r.read_text().splitlines()
        sid = lines[5].split(",")[0]
        lines[5] = f"{sid},NaN"
        write(r, lines)
        with pytest.raises(ValidationError, match="row 5"):
            ingest(d, r, sp)

    def test_out_of_bounds_lists_rows(self, tmp_path):
        sp = pressure_bin_space()
        d = write(tmp_path / "d.csv", ["sample_id,angle_of_attack_deg,additional_indentation_mm",
                                        "a,0.1,0.5", "b,0.3,0.5", "c,0.1,1.5"])
        r = write(tmp_path / "r.csv", ["sample_id,response", "a,500", "b,501", "c,502"])
        with pytest.raises(ValidationError, match=r"\[2, 3\]"):
            ingest(d, r, sp)

    def test_scientific_notation_and_column_mapping(self, tmp_path):
        sp = pressure_bin_space()
        d = write(tmp_path / "d.csv", ["id,phi,h", "x1,1e-1,5.0E-1", "x2,2.5e-1,0"])
        r = write(tmp_path / "r.csv", ["id,sigma_max", "x2,6.1e2", "x1,5.2e2"])
        cols = {"sample_id": "id", "angle_of_attack_deg": "phi",
                "additional_indentation_mm": "h", "response": "sigma_max"}
        s = ingest(d, r, sp, columns=cols)
        np.testing.assert_array_equal(s.design.values, [[0.1, 0.5], [0.25, 0.0]])
        np.testing.assert_array_equal(s.responses.values, [520.0, 610.0])

    def test_missing_column(self, tmp_path):
        sp = pressure_bin_space()
        d = write(tmp_path / "d.csv", ["sample_id,angle_of_attack_deg", "1,0.1"])
        r = write(tmp_path / "r.csv", ["sample_id,response", "1,1"])
        with pytest.raises(IngestionError, match="missing columns"):
            ingest(d, r, sp)
