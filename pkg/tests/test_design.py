import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from sobolgp.design import (
    DesignMatrix,
    Frame,
    ParameterDef,
    ParameterSpace,
    ResponseStandardizer,
    ResponseVector,
    SpaceTransformer,
    destandardize,
    from_gaussian,
    lhs_sample,
    read_design_csv,
    standardize,
    to_gaussian,
    to_physical,
    to_unit,
    write_design_csv,
)
from sobolgp.exceptions import (
    DegenerateResponseError,
    FrameMismatchError,
    InvalidDesignError,
    ShapeError,
    ValidationError,
)
from sobolgp.models import pressure_bin_space, pressure_bin_standin


def space2():
    return ParameterSpace.from_bounds([(0.0, 1.0), (-2.0, 4.0)], names=["x", "y"])


def assert_stratified(values):
    n = values.shape[0]
    for col in values.T:
        bins = np.floor(col * n).astype(int)
        assert sorted(bins.tolist()) == list(range(n))


class TestParameterSpace:
    def test_names_and_bounds(self):
        sp = space2()
        assert sp.dim == 2
        assert sp.names == ["x", "y"]
        np.testing.assert_array_equal(sp.width, [1.0, 6.0])

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValidationError):
            ParameterSpace.from_bounds([(0, 1), (0, 1)], names=["a", "a"])

    @pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, 1.0), (0.0, math.inf)])
    def test_bad_bounds(self, lo, hi):
        with pytest.raises(ValidationError):
            ParameterDef("p", lo, hi)

    def test_empty_space_rejected(self):
        with pytest.raises(ValidationError):
            ParameterSpace([])

    def test_dict_round_trip(self):
        sp = pressure_bin_space()
        assert ParameterSpace.from_dict(sp.to_dict()).to_dict() == sp.to_dict()


class TestLatinHypercube:
    def test_single_point(self):
        d = lhs_sample(space2(), 1, seed=3)
        assert d.values.shape == (1, 2)
        assert np.all((d.values >= 0) & (d.values < 1))

    def test_one_point_per_bin_n100(self):
        d = lhs_sample(space2(), 100, seed=42)
        assert d.frame is Frame.UNIT
        assert_stratified(d.values)

    def test_one_dim_n4(self):
        sp = ParameterSpace.from_bounds([(0, 1)])
        col = np.sort(lhs_sample(sp, 4, seed=7).values[:, 0])
        for k, v in enumerate(col):
            assert k / 4 <= v < (k + 1) / 4

    def test_zero_points_rejected(self):
        with pytest.raises(InvalidDesignError):
            lhs_sample(space2(), 0, seed=1)

    def test_columns_permuted_independently(self):
        d = lhs_sample(space2(), 50, seed=5).values
        assert not np.array_equal(np.argsort(d[:, 0]), np.argsort(d[:, 1]))

    def test_seed_changes_design(self):
        a = lhs_sample(space2(), 10, seed=1).values
        b = lhs_sample(space2(), 10, seed=2).values
        assert not np.array_equal(a, b)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 300), dim=st.integers(1, 5), seed=st.integers(0, 2**64 - 1))
    def test_stratification_property(self, n, dim, seed):
        sp = ParameterSpace.from_bounds([(0, 1)] * dim)
        a = lhs_sample(sp, n, seed)
        assert_stratified(a.values)
        np.testing.assert_array_equal(a.values, lhs_sample(sp, n, seed).values)


class TestFrames:
    def test_pressure_bin_axis_examples(self):
        sp = pressure_bin_space()
        u = DesignMatrix([[0.0, 1.0]], Frame.UNIT, sp)
        np.testing.assert_array_equal(to_physical(u).values, [[0.0, 1.0]])
        mid = DesignMatrix([[0.5, 0.5]], Frame.UNIT, space2())
        assert to_physical(mid).values[0, 1] == 1.0

    def test_frame_mismatch(self):
        p = DesignMatrix([[0.5, 0.0]], Frame.PHYSICAL, space2())
        with pytest.raises(FrameMismatchError):
            to_physical(p)
        with pytest.raises(FrameMismatchError):
            to_gaussian(p)
        with pytest.raises(FrameMismatchError):
            from_gaussian(p)

    def test_invariants_enforced(self):
        with pytest.raises(InvalidDesignError):
            DesignMatrix([[1.5, 0.0]], Frame.UNIT, space2())
        with pytest.raises(InvalidDesignError):
            DesignMatrix([[0.5, 5.0]], Frame.PHYSICAL, space2())
        with pytest.raises(ShapeError):
            DesignMatrix([[0.5]], Frame.UNIT, space2())
        with pytest.raises(InvalidDesignError):
            DesignMatrix([[np.nan, 0.1]], Frame.GAUSSIAN, space2())

    def test_values_read_only(self):
        d = lhs_sample(space2(), 3, seed=0)
        with pytest.raises(ValueError):
            d.values[0, 0] = 0.0

    def test_gaussian_clamps_edges(self):
        g = to_gaussian(DesignMatrix([[0.0, 1.0]], Frame.UNIT, space2())).values
        assert np.all(np.isfinite(g))
        assert g[0, 0] == pytest.approx(-7.034, abs=1e-3)
        assert g[0, 1] == pytest.approx(7.034, abs=1e-3)

    def test_median_maps_to_zero(self):
        g = to_gaussian(DesignMatrix([[0.5, 0.975]], Frame.UNIT, space2())).values
        assert g[0, 0] == 0.0
        assert g[0, 1] == pytest.approx(1.959964, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=2, max_size=2))
    def test_round_trips(self, row):
        u = DesignMatrix([row], Frame.UNIT, space2())
        back = to_unit(to_physical(u)).values
        np.testing.assert_allclose(back, u.values, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(from_gaussian(to_gaussian(u)).values, u.values, atol=1e-9)
        np.testing.assert_allclose(to_unit(to_gaussian(u)).values, u.values, atol=1e-9)


class TestStandardize:
    def test_one_two_three(self):
        r = standardize(ResponseVector([1.0, 2.0, 3.0]))
        assert r.mean == 2.0
        assert r.standardized
        assert abs(r.values.mean()) < 1e-12
        assert abs(r.values.std() - 1.0) < 1e-12

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateResponseError):
            standardize(ResponseVector([5.0, 5.0, 5.0]))

    def test_needs_two_values(self):
        with pytest.raises(ValidationError):
            standardize(ResponseVector([1.0]))

    def test_pipeline_responses_round_trip(self):
        sp = pressure_bin_space()
        X = to_physical(lhs_sample(sp, 100, seed=1)).values
        y = pressure_bin_standin(X[:, 0], X[:, 1])
        r = standardize(ResponseVector(y))
        np.testing.assert_allclose(destandardize(r.values, r), y, rtol=1e-9)
        assert abs(r.values.mean()) < 1e-12
        assert abs(r.values.std() - 1.0) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
    def test_standardized_moments(self, ys):
        y = np.array(ys)
        try:
            r = standardize(ResponseVector(y))
        except DegenerateResponseError:
            return
        assert abs(r.values.mean()) < 1e-9
        assert abs(r.values.std() - 1.0) < 1e-9


class TestTransformers:
    def test_space_transformer_round_trip(self):
        sp = space2()
        X = to_physical(lhs_sample(sp, 20, seed=4)).values
        for frame in ("unit", "gaussian"):
            t = SpaceTransformer(sp, frame=frame).fit(X)
            np.testing.assert_allclose(t.inverse_transform(t.transform(X)), X, atol=1e-9)

    def test_clone_and_params(self):
        t = SpaceTransformer(space2(), frame="unit")
        assert clone(t).get_params()["frame"] == "unit"

    def test_response_standardizer(self):
        s = ResponseStandardizer().fit([1.0, 2.0, 3.0])
        assert s.mean_ == 2.0
        np.testing.assert_allclose(s.inverse_transform(s.transform([4.0])), [4.0])


def test_csv_round_trip_is_exact(tmp_path):
    sp = space2()
    d = to_physical(lhs_sample(sp, 25, seed=11))
    path = tmp_path / "d.csv"
    write_design_csv(d, path)
    ids, back = read_design_csv(path, sp)
    assert ids == [str(i) for i in range(1, 26)]
    np.testing.assert_array_equal(back.values, d.values)
    assert path.read_text().splitlines()[0] == "sample_id,x,y"
