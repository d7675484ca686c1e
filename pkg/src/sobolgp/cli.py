"""Command-line pipeline: design -> evaluate -> fit -> sobol.

Each stage reads and writes plain CSV/JSON in the output directory and
records SHA-256 digests of everything it touched in ``manifest.json``.
``pipeline`` skips stages whose recorded inputs, settings and outputs still
match what is on disk, so an interrupted run resumes where it stopped.

Exit codes: 0 success, 2 usage, 3 validation, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .design import (
    RNG_ALGORITHM,
    Frame,
    ParameterSpace,
    lhs_sample,
    read_design_csv,
    to_physical,
    write_design_csv,
)
from .estimator import SurrogateSensitivity
from .exceptions import (
    ArtifactError,
    ConfigError,
    SobolGPError,
    StaleArtifactError,
    ValidationError,
)
from .models import (
    BUILTIN_MODELS,
    Ishigami,
    PressureBin,
    PressureBinParams,
    SampleSet,
    export_sample_set,
    generate_sample_set,
    ingest,
    make_builtin,
)
from .sobol import FIRST_ORDER_ESTIMATOR, TOTAL_ORDER_ESTIMATOR, SobolResult

log = logging.getLogger("sobolgp")

MANIFEST = "manifest.json"
STAGES = ("design", "evaluate", "fit", "sobol")
FILES = {
    "design": "design.csv",
    "design_unit": "design_unit.csv",
    "responses": "responses.csv",
    "model": "model.json",
    "sobol": "sobol.json",
    "summary": "sobol_summary.csv",
    "bars": "sobol_bars.csv",
}

DEFAULT_CONFIG = {
    "space": None,
    "model": {"builtin": "pressure_bin", "params": {}},
    "n_design": 100,
    "seed": 1,
    "fit": {
        "restarts": 8,
        "length_scale_bounds": [0.05, 20.0],
        "log_sigma0_sq_bounds": [-6.0, 6.0],
        "nugget": 1e-10,
        "max_nugget": 1e-4,
        "input_frame": "unit",
    },
    "sobol": {"n_base": 16384, "n_bootstrap": 500, "k_draws": 50, "joint_draw_size": 4096},
    "out": "sobolgp-run",
}


# configuration

def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "model":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file, then flag overrides (flags win)."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = _merge(cfg, json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base = os.path.dirname(os.path.abspath(path))
        ing = cfg.get("model", {}).get("ingest")
        if ing:
            for key in ("design", "responses"):
                if key in ing and not os.path.isabs(ing[key]):
                    ing[key] = os.path.join(base, ing[key])
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, name = key.partition(".")
        if name:
            cfg.setdefault(section, {})[name] = val
        else:
            cfg[section] = val
    return cfg


def _is_ingest(cfg):
    return "ingest" in cfg["model"]


def resolve_space(cfg) -> ParameterSpace:
    if cfg.get("space"):
        space = ParameterSpace.from_dict(cfg["space"])
    elif _is_ingest(cfg):
        raise ConfigError("ingest mode needs an explicit 'space'")
    else:
        space = make_builtin(cfg["model"]["builtin"], cfg["model"].get("params")).space
    return space


def resolve_model(cfg, space):
    name = cfg["model"]["builtin"]
    params = cfg["model"].get("params") or {}
    default = make_builtin(name, params)
    if space.names != default.space.names:
        raise ValidationError(
            f"model {name} takes parameters {default.space.names}, space defines {space.names}"
        )
    if name == "pressure_bin":
        return PressureBin(PressureBinParams(**params), space=space)
    if name == "ishigami":
        return Ishigami(**params, space=space)
    if not (np.array_equal(space.lower, default.space.lower)
            and np.array_equal(space.upper, default.space.upper)):
        raise ValidationError(f"{name} is defined on fixed bounds; drop the custom space")
    return default


def validate_config(cfg):
    """Raise on any problem; return ``(space, model_or_None)``."""
    model = cfg.get("model")
    if not isinstance(model, dict) or ("builtin" in model) == ("ingest" in model):
        raise ConfigError("'model' must contain exactly one of 'builtin' or 'ingest'")
    if "builtin" in model and model["builtin"] not in BUILTIN_MODELS:
        raise ConfigError(f"unknown builtin model {model['builtin']!r}; choose from {sorted(BUILTIN_MODELS)}")
    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    counts = {
        "n_design": cfg.get("n_design"),
        "fit.restarts": cfg["fit"].get("restarts"),
        "sobol.n_base": cfg["sobol"].get("n_base"),
        "sobol.n_bootstrap": cfg["sobol"].get("n_bootstrap"),
        "sobol.joint_draw_size": cfg["sobol"].get("joint_draw_size"),
    }
    for key, val in counts.items():
        if not isinstance(val, int) or val < 1:
            raise ConfigError(f"{key} must be an integer >= 1, got {val!r}")
    if cfg["sobol"]["n_base"] < 2:
        raise ConfigError("sobol.n_base must be >= 2")
    k = cfg["sobol"].get("k_draws")
    if not isinstance(k, int) or k < 0:
        raise ConfigError(f"sobol.k_draws must be an integer >= 0, got {k!r}")
    if cfg["fit"].get("input_frame") not in ("unit", "gaussian"):
        raise ConfigError("fit.input_frame must be 'unit' or 'gaussian'")
    space = resolve_space(cfg)
    if _is_ingest(cfg):
        ing = model["ingest"]
        for key in ("design", "responses"):
            if key not in ing:
                raise ConfigError(f"ingest needs a '{key}' file")
            if not os.path.isfile(ing[key]):
                raise ConfigError(f"ingest {key} file not found: {ing[key]}")
        return space, None
    return space, resolve_model(cfg, space)


def _seeds(seed):
    derive = lambda k: int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1, np.uint64)[0])
    return {"design": int(seed), "fit": derive(1), "sobol": derive(2)}


# manifest

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _sha_json(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


class Run:
    """Output directory plus its manifest."""

    def __init__(self, cfg, threads=None):
        self.cfg = cfg
        self.out = cfg["out"]
        self.threads = threads or os.cpu_count() or 1
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create output directory {self.out}: {exc}") from None
        self.manifest = self._load_manifest()

    def path(self, key):
        return os.path.join(self.out, FILES[key])

    def _load_manifest(self):
        path = os.path.join(self.out, MANIFEST)
        if os.path.exists(path):
            try:
                with open(path, encoding="utf-8") as fh:
                    return json.load(fh)
            except json.JSONDecodeError:
                raise StaleArtifactError(f"{path} is corrupt; remove it to start over") from None
        return {"stages": {}}

    def save_manifest(self):
        cfg = {k: v for k, v in self.cfg.items() if k != "out"}
        m = self.manifest
        m.update({
            "tool": "sobolgp",
            "version": __version__,
            "config": cfg,
            "config_sha256": _sha_json(cfg),
            "seeds": _seeds(self.cfg["seed"]),
            "rng": f"{RNG_ALGORITHM} seeded through numpy.random.SeedSequence",
            "design": "randomized latin hypercube (uniform point within each cell)",
            "estimators": {
                "first_order": FIRST_ORDER_ESTIMATOR,
                "total_order": TOTAL_ORDER_ESTIMATOR,
                "pick_freeze_sampling": "independent latin hypercubes for A and B",
                "confidence": "95% bootstrap percentile half-width over base samples",
                "surrogate_uncertainty": "joint GP posterior draws over blocks of base rows",
            },
            "optimizer": {
                "method": "L-BFGS-B (scipy) with analytic gradients",
                "space": "log sigma0^2, log length scales",
                "mu0": "profiled (generalized least squares)",
                "restarts": self.cfg["fit"]["restarts"],
            },
        })
        m.setdefault("runtime", {})["threads"] = self.threads
        tmp = os.path.join(self.out, MANIFEST + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(m, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, os.path.join(self.out, MANIFEST))

    def record(self, stage, key, inputs, outputs, seconds, extra=None):
        stages = self.manifest.setdefault("stages", {})
        # downstream records are invalid once an upstream stage reruns
        for later in STAGES[STAGES.index(stage) + 1:]:
            stages.pop(later, None)
        stages[stage] = {
            "key": key,
            "inputs": {os.path.relpath(p, self.out) if p.startswith(self.out) else p: sha256_file(p) for p in inputs},
            "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
            **(extra or {}),
        }
        self.manifest.setdefault("runtime", {}).setdefault("seconds", {})[stage] = round(seconds, 3)
        self.save_manifest()

    def check_input(self, key):
        """Refuse an input file that changed since the stage that wrote it."""
        path = self.path(key)
        if not os.path.exists(path):
            raise ArtifactError(f"missing {path}; run the earlier stage first")
        name = FILES[key]
        for rec in self.manifest.get("stages", {}).values():
            if name in rec.get("outputs", {}) and rec["outputs"][name] != sha256_file(path):
                raise StaleArtifactError(f"{path} changed since it was written (digest mismatch)")
        return path

    def stage_key(self, stage, inputs):
        cfg = self.cfg
        slices = {
            "design": {k: cfg[k] for k in ("space", "model", "n_design", "seed")},
            "evaluate": {"model": cfg["model"], "space": cfg["space"]},
            "fit": {"fit": cfg["fit"], "seed": cfg["seed"]},
            "sobol": {"sobol": cfg["sobol"], "seed": cfg["seed"]},
        }
        digests = [sha256_file(p) if os.path.exists(p) else None for p in inputs]
        return _sha_json({"stage": stage, "config": slices[stage], "inputs": digests})

    def is_current(self, stage, inputs):
        """True when the recorded stage can be reused as is."""
        rec = self.manifest.get("stages", {}).get(stage)
        if not rec or rec.get("key") != self.stage_key(stage, inputs):
            return False
        for name, digest in rec["outputs"].items():
            path = os.path.join(self.out, name)
            if not os.path.exists(path):
                return False
            if sha256_file(path) != digest:
                raise StaleArtifactError(f"{path} does not match the manifest digest")
        return True


# stages

def _stage_inputs(run, stage):
    cfg = run.cfg
    if stage == "design":
        return [cfg["model"]["ingest"]["design"]] if _is_ingest(cfg) else []
    if stage == "evaluate":
        ins = [run.path("design")]
        if _is_ingest(cfg):
            ins += [cfg["model"]["ingest"]["design"], cfg["model"]["ingest"]["responses"]]
        return ins
    if stage == "fit":
        ins = [run.path("design"), run.path("responses")]
        if os.path.exists(run.path("design_unit")):
            ins.append(run.path("design_unit"))
        return ins
    return [run.path("model")]


def cmd_design(run):
    cfg = run.cfg
    space, _ = validate_config(cfg)
    inputs = _stage_inputs(run, "design")
    key = run.stage_key("design", inputs)
    t0 = time.perf_counter()
    outputs = [run.path("design")]
    if _is_ingest(cfg):
        ing = cfg["model"]["ingest"]
        samples = ingest(ing["design"], ing["responses"], space, ing.get("columns"))
        write_design_csv(samples.design, run.path("design"), samples.sample_ids)
        if os.path.exists(run.path("design_unit")):
            os.remove(run.path("design_unit"))
    else:
        unit = lhs_sample(space, cfg["n_design"], _seeds(cfg["seed"])["design"])
        write_design_csv(to_physical(unit), run.path("design"))
        write_design_csv(unit, run.path("design_unit"))
        outputs.append(run.path("design_unit"))
    run.record("design", key, inputs, outputs, time.perf_counter() - t0,
               {"frame": "physical", "unit_sidecar": None if _is_ingest(cfg) else FILES["design_unit"]})
    log.info("design: wrote %s", run.path("design"))
    return outputs


def cmd_evaluate(run):
    cfg = run.cfg
    space, model = validate_config(cfg)
    design_path = run.check_input("design")
    inputs = _stage_inputs(run, "evaluate")
    key = run.stage_key("evaluate", inputs)
    t0 = time.perf_counter()
    ids, design = read_design_csv(design_path, space)
    if _is_ingest(cfg):
        ing = cfg["model"]["ingest"]
        samples = ingest(ing["design"], ing["responses"], space, ing.get("columns"))
        if list(samples.sample_ids) != ids or not np.array_equal(samples.design.values, design.values):
            raise ValidationError("ingested files no longer match the design stage output")
    else:
        gen = generate_sample_set(model, design, n_jobs=run.threads)
        samples = SampleSet(design, gen.responses, sample_ids=ids, model_name=model.name)
    tmp_design = run.path("design") + ".tmp"
    export_sample_set(samples, tmp_design, run.path("responses"))
    os.remove(tmp_design)
    extra = {"model": model.describe() if model else {"ingest": cfg["model"]["ingest"]}}
    run.record("evaluate", key, inputs, [run.path("responses")], time.perf_counter() - t0, extra)
    log.info("evaluate: wrote %d responses to %s", samples.design.n, run.path("responses"))
    return [run.path("responses")]


def _read_responses(path, ids):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    got = [r["sample_id"] for r in rows]
    if got != ids:
        raise ValidationError(f"{path}: sample ids do not line up with the design")
    return np.array([float(r["response"]) for r in rows])


def cmd_fit(run):
    cfg = run.cfg
    space, _ = validate_config(cfg)
    design_path = run.check_input("design")
    resp_path = run.check_input("responses")
    inputs = _stage_inputs(run, "fit")
    key = run.stage_key("fit", inputs)
    t0 = time.perf_counter()
    ids, design = read_design_csv(design_path, space)
    y = _read_responses(resp_path, ids)
    X_unit = None
    if os.path.exists(run.path("design_unit")):
        uids, unit = read_design_csv(run.check_input("design_unit"), space, Frame.UNIT)
        if uids != ids:
            raise ValidationError("unit-frame sidecar does not match the design")
        X_unit = unit.values
    f = cfg["fit"]
    est = SurrogateSensitivity(
        space=space,
        input_frame=f["input_frame"],
        n_restarts=f["restarts"],
        length_scale_bounds=tuple(f["length_scale_bounds"]),
        log_sigma0_sq_bounds=tuple(f["log_sigma0_sq_bounds"]),
        nugget=f["nugget"],
        max_nugget=f["max_nugget"],
        random_state=_seeds(cfg["seed"])["fit"],
        n_jobs=run.threads,
    ).fit(np.asarray(design.values), y, X_unit=X_unit)
    est.save(run.path("model"), provenance={
        "optimizer": "L-BFGS-B, analytic gradients, profiled mu0",
        "seed": _seeds(cfg["seed"])["fit"],
        "training_rows": int(design.n),
    })
    gp = est.gp_
    run.record("fit", key, inputs, [run.path("model")], time.perf_counter() - t0, {
        "log_ml": gp.log_ml_,
        "hyper": gp.hyper_.to_dict(),
        "input_frame": f["input_frame"],
        "restarts": gp.restarts_,
    })
    log.info("fit: log marginal likelihood %.6g", gp.log_ml_)
    return [run.path("model")]


def cmd_sobol(run):
    cfg = run.cfg
    space, _ = validate_config(cfg)
    model_path = run.check_input("model")
    inputs = _stage_inputs(run, "sobol")
    key = run.stage_key("sobol", inputs)
    t0 = time.perf_counter()
    est = SurrogateSensitivity.load(model_path)
    if est.space.to_dict() != space.to_dict():
        raise ValidationError("model file was fitted on a different parameter space")
    s = cfg["sobol"]
    result = est.sobol(
        n_base=s["n_base"], k_draws=s["k_draws"], seed=_seeds(cfg["seed"])["sobol"],
        n_bootstrap=s["n_bootstrap"], joint_draw_size=s["joint_draw_size"],
    )
    result = SobolResult.from_dict({
        **result.to_dict(),
        "provenance": {**result.provenance, "model_sha256": sha256_file(model_path)},
    })
    result.to_json(run.path("sobol"))
    result.write_summary_csv(run.path("summary"))
    result.write_bar_csv(run.path("bars"))
    outputs = [run.path("sobol"), run.path("summary"), run.path("bars")]
    run.record("sobol", key, inputs, outputs, time.perf_counter() - t0)
    for name, si, sti in zip(result.names, result.first_order, result.total_order):
        log.info("sobol: %-28s S=%.4f  ST=%.4f", name, si, sti)
    return outputs


COMMANDS = {"design": cmd_design, "evaluate": cmd_evaluate, "fit": cmd_fit, "sobol": cmd_sobol}


def cmd_pipeline(run):
    validate_config(run.cfg)
    done = []
    for stage in STAGES:
        if run.is_current(stage, _stage_inputs(run, stage)):
            log.info("%s: up to date, skipped", stage)
            continue
        COMMANDS[stage](run)
        done.append(stage)
    return done


# entry point

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--model", help=f"builtin model: {', '.join(sorted(BUILTIN_MODELS))}")
    common.add_argument("--n-design", type=int, dest="n_design")
    common.add_argument("--restarts", type=int)
    common.add_argument("--n-base", type=int, dest="n_base")
    common.add_argument("--n-bootstrap", type=int, dest="n_bootstrap")
    common.add_argument("--k-draws", type=int, dest="k_draws")
    common.add_argument("--input-frame", choices=["unit", "gaussian"], dest="input_frame")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sobolgp", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"sobolgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("design", "write a Latin hypercube design (or normalize an ingested one)"),
        ("evaluate", "evaluate the builtin model or validate ingested responses"),
        ("fit", "fit the GP surrogate by maximum likelihood"),
        ("sobol", "first-order and total Sobol' indices on the surrogate"),
        ("pipeline", "run every stage, resuming completed ones"),
        ("validate-config", "check the configuration and print the effective settings"),
    ]:
        sub.add_parser(name, help=help_, parents=[common])
    return parser


def _overrides(args):
    out = {
        "seed": args.seed,
        "out": args.out,
        "n_design": args.n_design,
        "fit.restarts": args.restarts,
        "fit.input_frame": args.input_frame,
        "sobol.n_base": args.n_base,
        "sobol.n_bootstrap": args.n_bootstrap,
        "sobol.k_draws": args.k_draws,
    }
    if args.model:
        out["model"] = {"builtin": args.model, "params": {}}
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "validate-config":
            validate_config(cfg)
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        run = Run(cfg, args.threads)
        if args.command == "pipeline":
            cmd_pipeline(run)
        else:
            COMMANDS[args.command](run)
    except SobolGPError as exc:
        print(f"sobolgp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sobolgp: I/O error: {exc}", file=sys.stderr)
        return ArtifactError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
