"""Command-line experiment runner.

Every experiment writes ``<experiment>.json`` (keys: experiment, params,
results, pass) plus CSV tables into the output directory.  Settings come from
built-in defaults, then an optional ``key=value`` config file, then flags.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import convolution as cv
from . import geometry as geo
from . import kernels as K
from . import laplace as L
from . import transmutation as T
from .errors import ConfigError, HeatKernError
from .geometry import ManifoldModel
from .kernels import OperatorSpec

EXPERIMENTS = ("expand", "convolve", "transmute", "riesz", "laplace-demo", "cutlocus", "bounds")


@dataclass
class ExperimentConfig:
    experiment: str = "expand"
    model: str = "sphere:1"
    operator: str = "laplace"
    nu: str = "1"
    tmin: float = 1e-3
    tmax: float = 1e-1
    tcount: int = 7
    t: float = 0.1
    r: float = 0.5
    partitions: str = "8,16,32,64"
    resolution: str = ""
    safety: float = 0.9
    seed: int = 0
    ragged: bool = False
    check_resolution: bool = True
    timing: bool = False
    out: str = "heatkern-out"

    @property
    def manifold(self) -> ManifoldModel:
        return ManifoldModel.parse(self.model)

    @property
    def op(self) -> OperatorSpec:
        return OperatorSpec.parse(self.operator)

    @property
    def nus(self) -> list[int]:
        return [int(v) for v in str(self.nu).split(",") if v.strip()]

    @property
    def N_list(self) -> list[int]:
        return [int(v) for v in str(self.partitions).split(",") if v.strip()]

    @property
    def times(self) -> np.ndarray:
        return np.logspace(math.log10(self.tmin), math.log10(self.tmax), int(self.tcount))

    def grid_resolution(self, fallback):
        if not str(self.resolution).strip():
            return fallback
        vals = [int(v) for v in str(self.resolution).replace("x", ",").split(",") if v.strip()]
        return vals[0] if len(vals) == 1 else tuple(vals)


# per-experiment defaults applied before the config file and flags
EXPERIMENT_DEFAULTS = {
    "expand": {},
    "convolve": {"model": "circle:1", "operator": "schroedinger:0,1"},
    "transmute": {"model": "circle:1", "tmin": 1e-3, "tmax": 1.0},
    "riesz": {},
    "laplace-demo": {"tmin": 1e-3, "tmax": 8e-3, "tcount": 4},
    "cutlocus": {"partitions": "4,8"},
    "bounds": {"tmin": 1e-3, "tmax": 1.0, "tcount": 7},
}

DEFAULT_RESOLUTION = {
    "convolve": {"circle": 256, "torus": 32, "sphere": (128, 256)},
    "transmute": {"circle": 64},
    "bounds": {"circle": 64, "torus": 16, "sphere": (8, 16)},
}

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, value):
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown setting {name!r}")
    kind = kinds[name]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            return _BOOL[str(value).strip().lower()]
        if kind == "float":
            return float(value)
        if kind == "int":
            return int(value)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r} for {name}") from exc
    return str(value).strip()


def read_config_file(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatkern", description="Heat-kernel asymptotics experiments.")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--model", help="circle:R | torus:L1,L2 | sphere:R")
    p.add_argument("--operator", help="laplace | schroedinger:a0,a1,...[;b1,...]")
    p.add_argument("--nu", help="expansion order(s), comma separated")
    p.add_argument("--tmin", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--tcount", type=int)
    p.add_argument("--t", type=float, help="final time for convolution sweeps")
    p.add_argument("--r", type=float, help="pair distance for expansion experiments")
    p.add_argument("--partitions", help="partition sizes N, comma separated")
    p.add_argument("--resolution", help="grid resolution, e.g. 256 or 128x256")
    p.add_argument("--safety", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--ragged", action="store_const", const=True, default=None)
    p.add_argument("--no-resolution-check", dest="check_resolution", action="store_const", const=False,
                   default=None)
    p.add_argument("--timing", action="store_const", const=True, default=None,
                   help="record wall-clock runtimes (outputs are then not reproducible)")
    p.add_argument("--out")
    p.add_argument("--config", help="key=value settings file")
    return p


def resolve_config(argv=None) -> ExperimentConfig:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            raise ConfigError("invalid command line") from exc
        raise
    flags = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    from_file = read_config_file(args.config) if args.config else {}
    experiment = flags.get("experiment") or from_file.get("experiment") or "expand"
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    settings = {"experiment": experiment}
    settings.update(EXPERIMENT_DEFAULTS[experiment])
    settings.update(from_file)
    settings.update(flags)
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in settings.items()})
    try:
        cfg.manifold, cfg.op, cfg.nus, cfg.N_list
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# -- helpers --------------------------------------------------------------------------------


def random_point(model: ManifoldModel, rng) -> np.ndarray:
    if model.kind == "circle":
        return np.array([rng.uniform(0, geo.TWO_PI)])
    if model.kind == "torus":
        return rng.uniform(0, 1, 2) * np.asarray(model.lengths)
    return np.array([math.acos(rng.uniform(-1, 1)), rng.uniform(0, geo.TWO_PI)])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else format(v, ".17g") for v in row) + "\n")


# -- experiments ---------------------------------------------------------------------------


def run_expand(cfg: ExperimentConfig, out: Path):
    model, op = cfg.manifold, cfg.op
    rng = np.random.default_rng(cfg.seed)
    x = random_point(model, rng)
    y = geo.exp_point(model, x, cfg.r, rng.uniform(0, geo.TWO_PI))
    ts = cfg.times
    rows, results, passed = [], {"x": x, "y": y, "orders": {}, "time_derivative_orders": {}}, {}
    remainder = lambda nu, t: float(K.expansion_remainder(model, op, nu, t, x, y))
    for nu in cfg.nus:
        rem = np.array([abs(remainder(nu, t)) for t in ts])
        slope = float(np.polyfit(np.log(ts), np.log(rem), 1)[0])
        results["orders"][str(nu)] = slope
        # diagnostic only: d/dt of the remainder by central differences, expected order nu
        h = 1e-3
        drem = np.array([abs(remainder(nu, t * (1 + h)) - remainder(nu, t * (1 - h))) / (2 * h * t) for t in ts])
        results["time_derivative_orders"][str(nu)] = float(np.polyfit(np.log(ts), np.log(drem), 1)[0])
        passed[f"order_nu{nu}"] = abs(slope - (nu + 1)) <= 0.25
        rows += [(format(nu, "d"), t, e) for t, e in zip(ts, rem)]
    results["fitted_order"] = results["orders"][str(cfg.nus[-1])]
    _write_csv(out / "expand.csv", ["nu", "t", "abs_remainder"], rows)
    return results, passed


def run_convolve(cfg: ExperimentConfig, out: Path):
    model, op = cfg.manifold, cfg.op
    grid = geo.build_grid(model, cfg.grid_resolution(DEFAULT_RESOLUTION["convolve"][model.kind]))
    results, passed = {"grid": grid.label(), "sweeps": {}}, {}
    for nu in cfg.nus:
        sweep = cv.convergence_sweep(model, op, nu, cfg.t, cfg.N_list, grid, safety=cfg.safety,
                                     ragged=cfg.ragged, seed=cfg.seed,
                                     check_resolution=cfg.check_resolution)
        rows = sweep.rows if cfg.timing else [
            cv.ConvergenceRow(r.mesh, r.sup_error, r.rel_pDelta, r.rel_e, 0.0) for r in sweep.rows]
        cv.write_rows_csv(rows, out / f"convolve_nu{nu}.csv")
        results["sweeps"][str(nu)] = {
            "fitted_order": sweep.fitted_order, "monotone": sweep.monotone,
            "resolution_change": sweep.resolution_change, "warnings": sweep.warnings,
            "max_rel_error": max(r.rel_pDelta for r in sweep.rows),
        }
        if nu >= 1:
            passed[f"order_nu{nu}"] = abs(sweep.fitted_order - nu) <= 0.3
            passed[f"monotone_nu{nu}"] = sweep.monotone
        else:
            passed["flat_nu0"] = abs(sweep.fitted_order) <= 0.3
        if sweep.resolution_change is not None:
            passed[f"resolution_nu{nu}"] = bool(sweep.resolution_stable)
    results["fitted_order"] = results["sweeps"][str(cfg.nus[-1])]["fitted_order"]
    return results, passed


def run_transmute(cfg: ExperimentConfig, out: Path):
    lams = np.concatenate([[0.0], np.logspace(-3, 3, 25)])
    ts = np.logspace(math.log10(cfg.tmin), math.log10(cfg.tmax), int(cfg.tcount))
    rows = T.cosine_battery(lams, ts)
    cos_err = max(r.abs_err / max(1.0, r.rhs) for r in rows)
    model = cfg.manifold
    grid = geo.build_grid(model, cfg.grid_resolution(DEFAULT_RESOLUTION["transmute"]["circle"]))
    cases = [(OperatorSpec.laplace(), 0.2), (OperatorSpec.parse("schroedinger:0,1"), 0.5),
             (OperatorSpec.laplace(), 10.0)]
    if cfg.op.has_potential and cfg.op != cases[1][0]:
        cases.append((cfg.op, 0.5))
    kernel_err = {}
    for op, t in cases:
        a = T.transmuted_kernel_matrix(model, op, t, grid).values
        b = K.reference_kernel(model, op, t, grid).values
        k = int(np.argmax(np.abs(a - b)))
        rows.append(T.CheckRow(f"kernel:{op.label()}", t, grid.size, a.flat[k], b.flat[k]))
        kernel_err[f"{op.label()}@{t:g}"] = float(np.max(np.abs(a - b)))
    T.write_checks_csv(rows, out / "transmute.csv")
    results = {"cosine_max_err": cos_err, "kernel_sup_err": kernel_err, "grid": grid.label()}
    passed = {"cosine": cos_err <= 1e-8, "kernels": max(kernel_err.values()) <= 1e-7}
    return results, passed


def run_riesz(cfg: ExperimentConfig, out: Path):
    rows = T.riesz_battery()
    T.write_checks_csv(rows, out / "riesz.csv")
    worst = max(r.rel_err for r in rows)
    return {"cases": len(rows), "max_rel_err": worst}, {"battery": worst < 1e-6}


def run_laplace_demo(cfg: ExperimentConfig, out: Path):
    report = L.ExpansionReport()
    ts = cfg.times
    spec, gamma = L.gaussian_toy()
    lead = L.laplace_leading_term(spec, gamma)
    gauss = [L.brute_force_integral(spec, t) for t in ts]
    report.add("gaussian", gamma.dim, lead, gauss[0])
    spec, gamma = L.valley_toy()
    lead_v = L.laplace_leading_term(spec, gamma)
    scaled = [math.sqrt(4 * math.pi * t) * L.brute_force_integral(spec, t) for t in ts]
    limit, slope = L.fitted_limit(ts, scaled, min(2, len(ts) - 1))
    report.add("valley", gamma.dim, lead_v, limit)
    bump, _ = L.valley_toy(L.ring_bump)
    decay_ts = [0.01, 0.02, 0.04]
    rate = L.decay_rate(bump, decay_ts)
    report.to_csv(out / "laplace-demo.csv")
    (out / "laplace-demo.txt").write_text(report.table() + "\n")
    results = {"gaussian": {"leading": lead, "brute_force": dict(zip(map(repr, ts), gauss))},
               "valley": {"leading": lead_v, "fitted_limit": limit, "fitted_slope": slope},
               "decay": {"ts": decay_ts, "slope_log_I_vs_inv_t": rate}}
    passed = {"gaussian_exact": max(abs(v - 0.5) for v in gauss) <= 1e-12,
              "valley_limit": abs(limit - lead_v) / lead_v <= 0.01,
              "decay_negative": rate < 0}
    return results, passed


def run_cutlocus(cfg: ExperimentConfig, out: Path):
    model, op = cfg.manifold, cfg.op
    rng = np.random.default_rng(cfg.seed)
    x = random_point(model, rng)
    y = geo.antipode(model, x)
    Ns = sorted(cfg.N_list)
    per_N = {}
    for N in Ns:
        comps = L.cut_locus_coefficient(model, op, x, y, cv.Partition.equidistant(1.0, N))
        per_N[N] = comps
    finest = per_N[Ns[-1]]
    dims = {c.dim for c in finest}
    d = max(dims)
    total = sum(c.coefficient for c in finest)
    if model.kind == "sphere":
        fitted, samples = L.antipodal_sphere_limit(model.radius)
    else:
        t = 1e-3
        samples = [(t, float(K.heat_ratio(model, t, x, y)))]
        fitted = samples[0][1]
    tol = 0.05 if d > 0 else 1e-3
    report = L.ExpansionReport()
    for c in finest:
        report.add(str(c.index), c.dim, c.coefficient)
    report.add("total", d, total, fitted)
    report.to_csv(out / "cutlocus.csv")
    (out / "cutlocus.txt").write_text(report.table() + "\n")
    stability = {}
    for a in Ns:
        if 2 * a in per_N:
            ca = sum(c.coefficient for c in per_N[a])
            cb = sum(c.coefficient for c in per_N[2 * a])
            stability[f"{a}->{2 * a}"] = abs(ca - cb) / abs(cb)
    results = {"x": x, "y": y, "components": len(finest), "dims": sorted(dims),
               "coefficients": {str(N): [c.coefficient for c in cs] for N, cs in per_N.items()},
               "total": total, "oracle_limit": fitted, "oracle_samples": samples,
               "stability": stability}
    passed = {"oracle_match": abs(total - fitted) / abs(fitted) <= tol,
              "stable": all(v <= 0.02 for v in stability.values())}
    return results, passed


def run_bounds(cfg: ExperimentConfig, out: Path):
    model = cfg.manifold
    grid = geo.build_grid(model, cfg.grid_resolution(DEFAULT_RESOLUTION["bounds"][model.kind]))
    fit = K.gaussian_bounds(model, cfg.times, grid)
    _write_csv(out / "bounds.csv", ["t", "min_ratio", "max_ratio"], fit["rows"])
    results = {"grid": grid.label(), "eps": fit["eps"], "upper_exponent": fit["upper_exponent"],
               "upper_constant": fit["upper_constant"]}
    passed = {"lower_bound_positive": fit["eps"] > 0,
              "finite": all(math.isfinite(v) for row in fit["rows"] for v in row)}
    return results, passed


RUNNERS = {
    "expand": run_expand, "convolve": run_convolve, "transmute": run_transmute, "riesz": run_riesz,
    "laplace-demo": run_laplace_demo, "cutlocus": run_cutlocus, "bounds": run_bounds,
}


def run(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results, passed = RUNNERS[cfg.experiment](cfg, out)
    params = {k: v for k, v in asdict(cfg).items() if k != "out"}
    summary = _clean({"experiment": cfg.experiment, "params": params, "results": results,
                      "pass": passed})
    with open(out / f"{cfg.experiment}.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return summary


def _thread_limit():
    n = os.environ.get("HEATKERN_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"heatkern: config error: {exc}", file=sys.stderr)
        return 2
    try:
        limiter = _thread_limit()
        summary = run(cfg)
        if limiter is not None:
            limiter.restore_original_limits()
    except (HeatKernError, ValueError, ArithmeticError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"heatkern: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    flags = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in sorted(summary["pass"].items()))
    print(f"{cfg.experiment}: {flags} -> {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
