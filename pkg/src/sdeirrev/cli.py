"""Command-line driver: single runs, dt sweeps, theory values and validation.

Configuration is a flat ``key=value`` file (``#`` comments); command-line
flags override it and ``--set KEY=VALUE`` overrides any key.  Model keys:

``family``      overdamped | langevin
``potential``   quadratic | quartic_radial
``dim``         state dimension (per particle for langevin)
``scale``       quadratic stiffness
``beta``        quartic inverse temperature, or Langevin inverse temperature
``diffusion``   additive | sigma_eps
``sigma``       additive noise level (quartic default sqrt(2/beta)); Langevin sigma
``epsilon``     sigma_eps parameter
``domain``      euclidean | torus, with ``half_width``
``n_particles``, ``mass``, ``gamma``  Langevin parameters
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimate import EpEstimate, merge_chains, run_chain
from .gc import SCHEMES, check_variant, default_variant, log_density_em, log_density_milstein
from .model import (ContractError, DiffusionModel, Domain, LangevinSpec, ModelSpec, PotentialModel,
                    validate_derivatives)
from .oracle import TheoryRef, ep_constant_multiplicative, ep_langevin_theory, langevin_coefficient, theory_for

__all__ = ["SweepConfig", "SweepTable", "build_model", "load_config", "run_sweep", "fit_slope",
           "emit_report", "check_table", "read_csv", "main", "CSV_HEADER", "DEFAULT_GRIDS"]

CSV_HEADER = ["scheme", "model", "dt", "n_steps", "ep", "stderr", "n_singular", "n_wraps", "valid", "seed"]

DEFAULT_GRIDS = {
    "em": (0.1, 0.05, 0.025, 0.0125),
    "milstein": (0.1, 0.05, 0.025, 0.0125),
    "bbk": (0.08, 0.04, 0.02, 0.01, 0.005),
}
DEFAULT_TIME = {"em": 2e6, "milstein": 2e6, "bbk": 2e5}

# (slope range, level tolerance) per theory kind
TOLERANCES = {
    "em_additive_order2": {"slope": (1.7, 2.3)},
    "em_multiplicative_constant": {"level_rel": 0.15},
    "milstein_order1": {"slope": (0.7, 1.3)},
    "bbk_linear": {"slope": (0.8, 1.2), "level_rel": 0.10},
}

# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


def _num(params, key, default):
    v = params.get(key)
    return default if v is None or v == "" else float(v)


def build_model(params: dict) -> ModelSpec:
    """ModelSpec from flat string parameters (see module docstring)."""
    p = {k: str(v) for k, v in params.items()}
    family = p.get("family", "overdamped")
    kind = p.get("potential", "quadratic")
    dim = int(_num(p, "dim", 1))
    domain = Domain.torus(_num(p, "half_width", 4.0)) if p.get("domain", "euclidean") == "torus" else Domain()
    if family == "langevin":
        spec = LangevinSpec(int(_num(p, "n_particles", 5)), dim, _num(p, "mass", 1.0), _num(p, "gamma", 1.0),
                            _num(p, "sigma", None), _num(p, "beta", None))
        n = spec.n_dof
        if kind == "quartic_radial":
            pot = PotentialModel.quartic_radial(_num(p, "potential_beta", 1.0), n)
        else:
            pot = PotentialModel.quadratic(n, _num(p, "scale", 1.0))
        return ModelSpec.langevin_model(pot, spec, domain)
    if family != "overdamped":
        raise ContractError(f"unknown family {family!r}")
    if kind == "quartic_radial":
        beta = _num(p, "beta", 20.0)
        pot = PotentialModel.quartic_radial(beta, dim)
        default_sigma = math.sqrt(2.0 / beta)
    elif kind == "quadratic":
        pot = PotentialModel.quadratic(dim, _num(p, "scale", 1.0))
        default_sigma = 1.0
    else:
        raise ContractError(f"potential {kind!r} is not available from a config file")
    diff = p.get("diffusion", "additive")
    if diff == "additive":
        dm = DiffusionModel.additive(_num(p, "sigma", default_sigma), dim)
    elif diff == "sigma_eps":
        dm = DiffusionModel.sigma_eps(_num(p, "epsilon", 1.0))
    else:
        raise ContractError(f"diffusion {diff!r} is not available from a config file")
    return ModelSpec.overdamped(pot, dm, domain)


@dataclass
class SweepConfig:
    """A dt sweep: one scheme, one model, replicated chains per dt."""

    scheme: str
    model_params: dict
    dt_grid: tuple
    total_time: Optional[float] = None
    n_steps: Optional[int] = None
    replicas: int = 4
    seed: int = 0
    variant: Optional[str] = None
    out: Optional[str] = None
    burn_in_frac: float = 0.1
    workers: int = 1
    n_batches: int = 100
    singular_threshold: float = 1e-6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ContractError(f"unknown scheme {self.scheme!r}")
        self.variant = check_variant(self.variant or default_variant(self.scheme))
        self.dt_grid = tuple(float(d) for d in self.dt_grid)
        if not self.dt_grid or any(not d > 0 for d in self.dt_grid):
            raise ContractError("dt grid must be nonempty and positive")
        if any(b >= a for a, b in zip(self.dt_grid, self.dt_grid[1:])):
            raise ContractError("dt grid must be strictly decreasing")
        if self.total_time is None and self.n_steps is None:
            self.total_time = DEFAULT_TIME[self.scheme]
        if self.replicas < 1 or not 0 <= self.burn_in_frac < 1:
            raise ContractError("need replicas >= 1 and 0 <= burn_in_frac < 1")

    def model(self) -> ModelSpec:
        return build_model(self.model_params)

    def steps_for(self, dt: float) -> int:
        if self.n_steps is not None:
            return int(self.n_steps)
        return int(round(self.total_time / dt))


def load_config(path) -> dict:
    """Flat key=value file as a dict of strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def config_from_dict(d: dict) -> SweepConfig:
    d = dict(d)
    scheme = d.pop("scheme", "em")
    dts = d.pop("dt", None)
    grid = tuple(float(v) for v in str(dts).replace(",", " ").split()) if dts else DEFAULT_GRIDS.get(scheme, ())
    kw = {}
    conv = {"time": ("total_time", float), "steps": ("n_steps", lambda v: int(float(v))),
            "replicas": ("replicas", int), "seed": ("seed", int), "variant": ("variant", str),
            "out": ("out", str), "burn_in_frac": ("burn_in_frac", float), "workers": ("workers", int),
            "n_batches": ("n_batches", int), "singular_threshold": ("singular_threshold", float)}
    for key, (name, fn) in conv.items():
        v = d.pop(key, None)
        if v is not None and v != "":
            kw[name] = fn(v)
    return SweepConfig(scheme, d, grid, **kw)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepTable:
    """Merged estimates per dt (descending) with the log-log fit."""

    scheme: str
    model: str
    rows: list
    slope: float = math.nan
    slope_stderr: float = math.nan
    intercept: float = math.nan
    theory: Optional[TheoryRef] = None
    replicas: list = field(default_factory=list, repr=False)


def _job(args):
    scheme, params, dt, n, burn, seed, variant, chain, n_batches, thr = args
    model = build_model(params)
    return run_chain(scheme, model, dt, n, burn, seed=seed, variant=variant, chain=chain,
                     n_batches=n_batches, singular_threshold=thr)


def _failed(scheme, model, dt, n, seed, variant, chain):
    return EpEstimate(scheme, model.label(), dt, math.nan, math.nan, n, 0, 0, 0.0, seed, variant, False, chain)


def run_sweep(config: SweepConfig, replica_order: Optional[Sequence[int]] = None) -> SweepTable:
    """Run every (dt, replica) chain, merge replicas per dt and fit the slope.

    Chains use streams ``(dt index, replica)``, so the result does not depend
    on worker count or completion order.  ``replica_order`` permutes the
    merge order (for testing that invariance).
    """
    model = config.model()
    jobs = []
    for i, dt in enumerate(config.dt_grid):
        n = config.steps_for(dt)
        burn = int(config.burn_in_frac * n)
        for r in range(config.replicas):
            jobs.append((config.scheme, config.model_params, dt, n, burn, config.seed, config.variant, (i, r),
                         config.n_batches, config.singular_threshold))
    results = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [(job, pool.submit(_job, job)) for job in jobs]
            for job, fut in futures:
                results[job[7]] = _collect(fut.result, config, model, job)
    else:
        for job in jobs:
            results[job[7]] = _collect(lambda job=job: _job(job), config, model, job)

    order = list(replica_order) if replica_order is not None else list(range(config.replicas))
    rows, reps = [], []
    for i, dt in enumerate(config.dt_grid):
        chains = [results[(i, r)] for r in order]
        reps.append(chains)
        ok = [c for c in chains if math.isfinite(c.ep)]
        if ok:
            merged = merge_chains(ok)
            if len(ok) < len(chains):
                merged.valid = False
        else:
            merged = chains[0]
        rows.append(merged)
    if not any(r.valid for r in rows):
        raise RuntimeError("every row of the sweep is invalid")
    table = SweepTable(config.scheme, model.label(), rows, theory=theory_for(config.scheme, model), replicas=reps)
    usable = [(r.dt, r.ep, r.stderr) for r in rows if r.valid and r.ep > 0]
    if len(usable) >= 2:
        table.slope, table.slope_stderr, table.intercept = fit_slope(usable)
    return table


def _collect(call, config, model, job):
    try:
        return call()
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"warning: chain {job[7]} at dt={job[2]} failed: {exc}", file=sys.stderr)
        return _failed(config.scheme, model, job[2], job[3], config.seed, config.variant, job[7])


def fit_slope(rows) -> tuple[float, float, float]:
    """Weighted least squares of log ep on log dt.

    Weights are (ep / stderr)^2, i.e. inverse relative variances; if any
    stderr is zero or missing the fit is unweighted.

    Returns
    -------
    (slope, slope_stderr, intercept)
    """
    rows = [r for r in rows if r[1] > 0 and math.isfinite(r[1])]
    if len(rows) < 2:
        raise ContractError("need at least two rows with ep > 0")
    dt = np.array([r[0] for r in rows], dtype=float)
    ep = np.array([r[1] for r in rows], dtype=float)
    se = np.array([r[2] if len(r) > 2 else math.nan for r in rows], dtype=float)
    x, y = np.log(dt), np.log(ep)
    if np.all(np.isfinite(se)) and np.all(se > 0):
        coef, cov = np.polyfit(x, y, 1, w=ep / se, cov="unscaled")
        return float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1])
    if len(rows) >= 4:
        coef, cov = np.polyfit(x, y, 1, cov=True)
        return float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1])
    coef = np.polyfit(x, y, 1)
    return float(coef[0]), math.nan, float(coef[1])


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def check_table(table: SweepTable) -> list[tuple[str, bool, str]]:
    """Pass/fail lines comparing a sweep with its theory reference."""
    th = table.theory
    if th is None:
        return []
    tol = TOLERANCES[th.kind]
    out = []
    if "slope" in tol:
        lo, hi = tol["slope"]
        ok = lo <= table.slope <= hi
        out.append(("slope", ok, f"slope {table.slope:.4f} +- {table.slope_stderr:.4f} in [{lo}, {hi}]"))
    valid = [r for r in table.rows if r.valid]
    if th.kind == "em_multiplicative_constant":
        for r in valid:
            rel = abs(r.ep - th.value) / th.value if th.value > 0 else math.inf
            out.append((f"level dt={r.dt:g}", rel <= tol["level_rel"],
                        f"ep {r.ep:.5g} vs c {th.value:.5g} (rel {rel:.3f}, tol {tol['level_rel']})"))
    if th.kind == "bbk_linear" and valid:
        r = min(valid, key=lambda e: e.dt)
        p = th.params
        exact = ep_langevin_theory(p["N"], p["gamma"], p["mass"], r.dt) / r.dt
        rel = abs(r.ep / r.dt - exact) / exact
        out.append(("rate at smallest dt", rel <= tol["level_rel"],
                    f"ep/dt {r.ep / r.dt:.5g} vs {exact:.5g} (rel {rel:.3f}, tol {tol['level_rel']}); "
                    f"ratio to N gamma^2/(2 m^2) = {r.ep / r.dt / th.value:.4f}"))
    return out


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(table: SweepTable, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for r in table.rows:
            wr.writerow([r.scheme, r.model, _fmt(r.dt), r.n_steps, _fmt(r.ep), _fmt(r.stderr), r.n_singular,
                         r.n_wraps, "true" if r.valid else "false", r.seed])
    return path


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by :func:`emit_report`, with typed values."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = ("n_steps", "n_singular", "n_wraps", "seed")
    floats = ("dt", "ep", "stderr")
    out = []
    for r in rows:
        r = dict(r)
        for k in ints:
            r[k] = int(r[k])
        for k in floats:
            r[k] = float(r[k])
        r["valid"] = r["valid"] == "true"
        out.append(r)
    return out


def summary_text(table: SweepTable) -> str:
    lines = [f"scheme: {table.scheme}", f"model: {table.model}", ""]
    lines.append(f"{'dt':>10} {'ep':>14} {'stderr':>12} {'n_steps':>11} {'singular':>8} {'wraps':>7} valid")
    for r in table.rows:
        lines.append(f"{r.dt:>10.5g} {r.ep:>14.6g} {r.stderr:>12.4g} {r.n_steps:>11d} {r.n_singular:>8d} "
                     f"{r.n_wraps:>7d} {str(r.valid).lower()}")
    lines.append("")
    lines.append(f"fitted slope: {table.slope:.4f} +- {table.slope_stderr:.4f} (intercept {table.intercept:.4f})")
    th = table.theory
    if th is None:
        lines.append("no theory reference")
    else:
        val = "" if th.value is None else f", value {th.value:.6g}"
        lines.append(f"theory: {th.kind} (expected slope {th.order:g}{val})")
        for name, ok, detail in check_table(table):
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return "\n".join(lines) + "\n"


def emit_report(table: SweepTable, path) -> list[Path]:
    """Write ``path`` (CSV) and ``<stem>_summary.txt`` next to it."""
    path = Path(path)
    csv_path = write_csv(table, path)
    txt = path.with_name(path.stem + "_summary.txt")
    txt.write_text(summary_text(table))
    return [csv_path, txt]


# --------------------------------------------------------------------------
# Validation battery
# --------------------------------------------------------------------------


def _normalization(model: ModelSpec, scheme: str, dt: float, points=(-1.0, 0.0, 0.5)) -> float:
    """max |integral of Pi(x, .) - 1| over a few x, for 1D overdamped models."""
    from scipy.integrate import quad

    worst = 0.0
    dens = log_density_em if scheme == "em" else log_density_milstein
    for x0 in points:
        de = np.sqrt(model.diffusion.scalar_terms(x0)[1] * dt)
        f = lambda y: math.exp(dens(model, np.array([x0]), np.array([y]), dt))  # noqa: E731
        lo, hi = x0 - 40 * de - 1.0, x0 + 40 * de + 1.0
        total = 0.0
        for a, b in zip(np.linspace(lo, hi, 41)[:-1], np.linspace(lo, hi, 41)[1:]):
            total += quad(f, a, b, limit=200, epsabs=1e-13)[0]
        worst = max(worst, abs(total - 1.0))
    return worst


def validate(model: ModelSpec, dt: float = 0.01) -> list[tuple[str, bool, str]]:
    grid = np.linspace(-2.0, 2.0, 9)
    if model.dim > 1:
        grid = [np.array([a, b] + [0.3] * (model.dim - 2)) for a in grid[::2] for b in grid[1::2]]
    rep = validate_derivatives(model, grid)
    out = [(f"derivative {k}", v <= 1e-5, f"max error {v:.3g}") for k, v in rep.errors.items()]
    if model.is_overdamped and model.dim == 1:
        for scheme in ("em", "milstein"):
            err = _normalization(model, scheme, dt)
            out.append((f"{scheme} density normalization", err <= 1e-8, f"|int - 1| = {err:.3g}"))
    return out


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdeirrev", description="Entropy production of SDE discretizations.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "one chain at the first --dt"), ("sweep", "replicated runs over a dt grid"),
                       ("theory", "closed-form reference values"), ("validate", "derivative and normalization checks")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--dt", type=float, action="append", help="time step (repeatable)")
        p.add_argument("--steps", type=int, help="accumulated steps per chain")
        p.add_argument("--time", type=float, help="total time per chain (steps = time / dt)")
        p.add_argument("--burn-in-frac", type=float)
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=("dropped", "exact"))
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return ap


def _merged_settings(args) -> dict:
    d = load_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ContractError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        d[k.strip()] = v.strip()
    flags = {"scheme": args.scheme, "steps": args.steps, "time": args.time, "burn_in_frac": args.burn_in_frac,
             "replicas": args.replicas, "seed": args.seed, "variant": args.variant, "workers": args.workers,
             "out": args.out}
    for k, v in flags.items():
        if v is not None:
            d[k] = str(v)
    if args.dt:
        d["dt"] = " ".join(repr(v) for v in args.dt)
    return d


def _cmd_simulate(cfg: SweepConfig) -> int:
    dt = cfg.dt_grid[0]
    n = cfg.steps_for(dt)
    est = run_chain(cfg.scheme, cfg.model(), dt, n, int(cfg.burn_in_frac * n), seed=cfg.seed,
                    variant=cfg.variant, n_batches=cfg.n_batches, singular_threshold=cfg.singular_threshold)
    print(f"{est.scheme} {est.model} dt={est.dt:g} n={est.n_steps} ep={est.ep:.6g} +- {est.stderr:.3g} "
          f"singular={est.n_singular} wraps={est.n_wraps} valid={str(est.valid).lower()} "
          f"({est.wall_seconds:.2f}s)")
    if cfg.out:
        write_csv(SweepTable(est.scheme, est.model, [est]), cfg.out)
    return 0 if est.valid else 1


def _cmd_theory(cfg: SweepConfig) -> int:
    model = cfg.model()
    if not model.is_overdamped:
        lg = model.langevin
        print(f"BBK leading coefficient N gamma^2/(2 m^2) = {langevin_coefficient(lg.n_dof, lg.gamma, lg.mass):.10g}")
        for dt in cfg.dt_grid:
            print(f"  dt={dt:g}: ep = {ep_langevin_theory(lg.n_dof, lg.gamma, lg.mass, dt):.10g}")
        return 0
    if model.dim == 1:
        print(f"EM small-dt level c = (3/4) E[Sigma^-1 Sigma'^2] = {ep_constant_multiplicative(model):.10g}")
    th = theory_for(cfg.scheme, model)
    print("no theory reference" if th is None else f"{cfg.scheme}: {th.kind}, expected slope {th.order:g}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_dict(_merged_settings(args))
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "sweep":
            table = run_sweep(cfg)
            text = summary_text(table)
            if cfg.out:
                for p in emit_report(table, cfg.out):
                    print(f"wrote {p}", file=sys.stderr)
            print(text, end="")
            return 0
        if args.command == "theory":
            return _cmd_theory(cfg)
        results = validate(cfg.model(), cfg.dt_grid[-1])
        for name, ok, detail in results:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return 0 if all(ok for _, ok, _ in results) else 1
    except (ContractError, ValueError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
