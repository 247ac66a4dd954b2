"""Command-line experiment driver.

    vortexmoduli <command> --config FILE --out DIR [--seed N] [--refine K]

Every command writes ``report.json`` (deterministic for a given config and
seed), ``timings.json`` (wall-clock times, kept apart so the report stays
byte-identical between runs) and, where a table is produced, a CSV file.
Exit codes: 0 ok, 2 a check failed, 3 the solver did not converge, 4 bad
configuration.  VORTEXMODULI_WORKERS caps the number of worker processes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NonConvergenceError, VortexModuliError
from .families import constant_family, jacobian_family, polystable_family, twisted_triple
from .gridio import atomic_write, save_grid
from .hodge import HodgeComplex
from .moduli import ModuliGeometry, classify_refinement, refinement_study
from .torus import make_flat_torus
from .triples import Verdict, check_stability
from .vortex import SolverConfig, config_dict, solve_coupled_vortex

SCHEMA = "vortexmoduli.report/1"
COMMANDS = ("solve", "stability", "ks", "metric", "curvature", "fibint", "identities", "report")
WORKERS_ENV = "VORTEXMODULI_WORKERS"
EXIT_OK, EXIT_CHECK, EXIT_NONCONVERGENCE, EXIT_CONFIG = 0, 2, 3, 4


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    return max(1, min(n, os.cpu_count() or 1))


# ---------------------------------------------------------------- builders


def build_base(cfg: ExperimentConfig):
    return make_flat_torus(cfg.base.tau, cfg.base.n_grid)


def build_triple(cfg: ExperimentConfig, alpha: float | None = None):
    t = cfg.triple
    twist = t.twist if t.kind == "twisted" else 0.0
    a = t.alpha if alpha is None else alpha
    return twisted_triple(build_base(cfg), a, t.phi, t.eps, twist=twist, seed=cfg.run.seed, cutoff=t.cutoff)


def build_family(cfg: ExperimentConfig):
    f = cfg.family
    base = build_base(cfg)
    common = dict(alpha=cfg.triple.alpha, delta=f.delta)
    if f.kind == "jacobian":
        return jacobian_family(base, twist=f.twist, seed=cfg.run.seed, cutoff=f.cutoff, extent=f.extent,
                               curve=f.nonlinear, **common)
    if f.kind == "polystable":
        return polystable_family(base, twist=f.twist, seed=cfg.run.seed, cutoff=f.cutoff, extent=f.extent,
                                 nonlinear=f.nonlinear, **common)
    return constant_family(base, **common)


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(tol=s.tol, max_iter=s.max_iter, cg_tol=s.cg_tol, cg_maxiter=s.cg_maxiter,
                        lm_shift=s.lm_shift)


def geometry(cfg: ExperimentConfig, family=None) -> ModuliGeometry:
    fam = build_family(cfg) if family is None else family
    return ModuliGeometry(fam, hodge_kw={"kernel_threshold": cfg.checks.harmonic_threshold,
                                         "seed": cfg.run.seed})


# ---------------------------------------------------------------- serialization


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, Verdict):
        return x.value
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return {"re": jsonable(x.real.tolist()), "im": jsonable(x.imag.tolist())}
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": jsonable(float(x.real)), "im": jsonable(float(x.imag))}
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dumps(obj) -> bytes:
    return (json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def csv_bytes(rows: list[dict]) -> bytes:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue().encode()


class Run:
    """Collects results, checks, tables and grids for one command."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.results: dict = {}
        self.checks: list[dict] = []
        self.tables: dict[str, list[dict]] = {}
        self.grids: dict[str, tuple] = {}
        self.timings: dict[str, float] = {}
        self.status = "ok"

    def check(self, name, passed, value=None, tolerance=None, **detail):
        self.checks.append({"name": name, "passed": bool(passed), "value": value, "tolerance": tolerance,
                            **detail})

    def timed(self, label, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t0

    def exit_code(self) -> int:
        if self.status == "non-convergence":
            return EXIT_NONCONVERGENCE
        return EXIT_CHECK if any(not c["passed"] for c in self.checks) else EXIT_OK

    def report(self) -> dict:
        failed = [c["name"] for c in self.checks if not c["passed"]]
        status = self.status if self.status != "ok" else ("check-failure" if failed else "ok")
        return {"schema": SCHEMA, "version": __version__, "command": self.command, "status": status,
                "seed": self.cfg.run.seed, "refine": self.cfg.run.refine, "config": self.cfg.to_dict(),
                "checks": self.checks, "failed_checks": failed, "results": self.results}

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in sorted(self.tables.items()):
            atomic_write(out / f"{name}.csv", csv_bytes(rows))
        for name, (data, bideg) in sorted(self.grids.items()):
            save_grid(out / f"{name}.vtxg", data, bideg)
        atomic_write(out / "timings.json", dumps(self.timings))
        atomic_write(out / "report.json", dumps(self.report()))


# ---------------------------------------------------------------- commands


def _closed_form(cfg: ExperimentConfig):
    """Constant rank-one data has h1/h2 = alpha / (2|c|^2)."""
    t = cfg.triple
    if t.kind != "constant" or len(t.phi) != 1 or t.phi[0] == 0:
        return None
    return t.alpha / (2 * abs(t.phi[0]) ** 2)


def cmd_solve(run: Run) -> None:
    cfg = run.cfg
    triple = build_triple(cfg)
    run.results["verdict"] = check_stability(triple)
    run.results["holomorphy_residual"] = triple.holomorphy_residual()
    run.results["solver"] = config_dict(solver_config(cfg))
    try:
        h1, h2, rep, trace = run.timed("solve", solve_coupled_vortex, triple, solver_config(cfg))
    except NonConvergenceError as exc:
        run.status = "non-convergence"
        run.results["failure"] = getattr(exc, "report", None) or {"message": str(exc)}
        run.tables["trace"] = list(run.results["failure"].get("trace", []))
        return
    run.tables["trace"] = trace
    run.results["residual"] = rep.summary()
    run.results["iterations"] = len(trace) - 1
    tol = cfg.solver.tol
    run.check("residual", rep.sup_norm <= tol, rep.sup_norm, tol)
    worst = max(abs(r["trace_integral"]) for r in trace)
    run.check("trace_integral_every_iterate", worst <= 1e-10, worst, 1e-10)
    target = _closed_form(cfg)
    if target is not None:
        ratio = h1[..., 0, 0] / h2[..., 0, 0]
        dev = float(np.max(np.abs(ratio - target)))
        run.results["closed_form"] = {"expected_ratio": target, "max_deviation": dev}
        run.check("closed_form_ratio", dev <= 1e-8 * max(1.0, target), dev, 1e-8)
    if cfg.run.dump_grids:
        run.grids["h1"] = (h1, (0, 0))
        run.grids["h2"] = (h2, (0, 0))
        run.grids["phi"] = (triple.phi, (0, 0))


def _sweep_point(cfg: ExperimentConfig, alpha: float) -> dict:
    triple = build_triple(cfg, alpha)
    verdict = check_stability(triple)
    try:
        _, _, rep, trace = solve_coupled_vortex(triple, solver_config(cfg))
        outcome = {"converged": True, "status": "converged", "residual": rep.sup_norm, "iterations": len(trace) - 1}
    except NonConvergenceError as exc:
        r = getattr(exc, "report", None) or {}
        outcome = {"converged": False, "status": r.get("status", "non-convergence"),
                   "residual": r.get("last_sup_norm", float("nan")), "iterations": len(r.get("trace", [])) - 1}
    return {"alpha": float(alpha), "verdict": verdict.value, **outcome}


def cmd_stability(run: Run) -> None:
    cfg = run.cfg
    triple = build_triple(cfg)
    run.results["verdict"] = check_stability(triple)
    run.results["taus"] = list(triple.taus)
    alphas = cfg.checks.alphas
    if not alphas:
        return
    n = min(workers(), len(alphas))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_point, [cfg] * len(alphas), alphas))
    else:
        rows = [_sweep_point(cfg, a) for a in alphas]
    run.tables["alpha_sweep"] = rows
    run.results["alpha_sweep"] = rows
    for r in rows:
        if r["verdict"] == Verdict.UNSUPPORTED.value:
            continue
        expect = r["verdict"] in (Verdict.STABLE.value, Verdict.POLYSTABLE.value)
        run.check(f"kobayashi_hitchin[alpha={r['alpha']!r}]", expect == r["converged"], r["status"],
                  verdict=r["verdict"])


def _ks_measure(M: ModuliGeometry) -> dict:
    out = {}
    for i in range(M.m):
        d, ds = M.harmonicity_check(i)
        out[f"d_mu[{i}]"] = d
        out[f"dstar_mu[{i}]"] = ds
        out[f"norm_mu[{i}]"] = M.hodge().norm(M.mu(i))
    return out


def cmd_ks(run: Run) -> None:
    cfg = run.cfg
    levels = max(1, cfg.run.refine)
    study = run.timed("ks", refinement_study, build_family(cfg), _ks_measure, levels,
                      hodge_kw={"kernel_threshold": cfg.checks.harmonic_threshold, "seed": cfg.run.seed})
    M = geometry(cfg)
    reps = [M.ks_representative(i, project=True) for i in range(M.m)]
    run.results["projection_distance"] = [r.projection_distance for r in reps]
    run.results["levels"] = [{"delta": cfg.family.delta / 2**k, **s} for k, s in enumerate(study)]
    run.tables["ks_refinement"] = run.results["levels"]
    c = cfg.checks
    for key in study[0]:
        if key.startswith("norm_"):
            continue
        i = key[key.index("[") + 1:-1]
        first = study[0][key]
        run.check(f"{key}_bound", first <= c.harmonicity_tol, first, c.harmonicity_tol)
        floor = c.ks_noise_floor * study[-1][f"norm_mu[{i}]"]
        verdict = classify_refinement(study[-2][key], study[-1][key], c.ratio_low, c.ratio_high, floor)
        run.check(f"{key}_refinement", verdict["passed"], verdict["ratio"], [c.ratio_low, c.ratio_high],
                  status=verdict["status"], noise_floor=floor)


def cmd_metric(run: Run) -> None:
    cfg = run.cfg
    M = geometry(cfg)
    G = run.timed("metric", M.metric, True)
    run.results["G"] = G
    run.results["G_unprojected"] = M.metric(project=False)
    run.results["G_explicit_formula"] = np.array([[M.vm_metric_explicit(i, j) for j in range(M.m)]
                                                 for i in range(M.m)])
    run.results["projection_distance"] = [M.ks_representative(i, True).projection_distance for i in range(M.m)]
    H = M.hodge()
    run.results["harmonic_dims"] = {str(k): H.harmonic_dim(k) for k in range(3)}
    run.results["kernel_report"] = {str(k): H.kernel_report(k) for k in range(3)}
    herm = float(np.max(np.abs(G - G.conj().T)))
    ev = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    run.results["eigenvalues"] = ev
    run.check("metric_hermitian", herm <= 1e-8 * np.max(np.abs(G)), herm, 1e-8)
    run.check("metric_positive_definite", ev.min() > 0, float(ev.min()), 0.0)


def curvature_comparison(R, oracle, oracle_terms) -> dict:
    """Deviation of the formula from the oracle, relative to the oracle's size.

    The size is the larger of the oracle value and its two separate terms, so a
    tensor that vanishes by cancellation is still compared on a meaningful scale.
    """
    scale = max(float(np.max(np.abs(oracle))), *(float(np.max(np.abs(t))) for t in oracle_terms.values()))
    dev = float(np.max(np.abs(R - oracle)))
    return {"absolute_deviation": dev, "scale": scale, "relative_deviation": dev / scale if scale else 0.0}


def curvature_symmetry(R) -> float:
    swap = np.abs(R - R.transpose(2, 1, 0, 3)).max()
    herm = np.abs(R - R.transpose(1, 0, 3, 2).conj()).max()
    return float(max(swap, herm))


def cmd_curvature(run: Run) -> None:
    cfg = run.cfg
    M = geometry(cfg)
    T = run.timed("formula", M.curvature_tensor)
    O, terms = run.timed("oracle", M.curvature_oracle)
    cmp = curvature_comparison(T.R, O, terms)
    scan = run.timed("semipositivity", M.semipositivity_scan, T, cfg.checks.semipositivity_samples, cfg.run.seed)
    run.results.update({"G": T.G, "R": T.R, "terms": T.terms, "oracle": O, "oracle_terms": terms,
                        "comparison": cmp, "semipositivity": scan,
                        "first_term_magnitude": float(np.max(np.abs(T.terms["bracket_term"])))})
    c = cfg.checks
    run.check("curvature_vs_oracle", cmp["relative_deviation"] <= c.curvature_rel_tol,
              cmp["relative_deviation"], c.curvature_rel_tol)
    sym = curvature_symmetry(T.R)
    run.check("curvature_symmetries", sym <= 1e-8, sym, 1e-8)
    run.check("semipositivity", scan["min"] >= -c.semipositivity_tol, scan["min"], -c.semipositivity_tol)


def cmd_fibint(run: Run) -> None:
    cfg = run.cfg
    if cfg.family.kind == "polystable":
        raise ConfigError("[family] kind: fibint needs a one-direction family (jacobian or constant)")
    M = geometry(cfg)
    res = run.timed("fibint", M.fiber_integral_check)
    run.results.update(res)
    run.check("fiber_integral", res["relative_deviation"] <= cfg.checks.fibint_rel_tol,
              res["relative_deviation"], cfg.checks.fibint_rel_tol)


def _identity_measure(M: ModuliGeometry) -> dict:
    return {"residuals": M.identity_residuals(), "scales": M.identity_scales()}


def cmd_identities(run: Run) -> None:
    cfg = run.cfg
    c = cfg.checks
    levels = max(1, cfg.run.refine)
    delta = cfg.family.identity_delta
    study = run.timed("identities", refinement_study, build_family(cfg.replace("family", delta=delta)),
                      _identity_measure, levels,
                      hodge_kw={"kernel_threshold": c.harmonic_threshold, "seed": cfg.run.seed})
    names = list(study[0]["residuals"])
    rows = []
    for k, s in enumerate(study):
        rows.append({"delta": delta / 2**k, **s["residuals"]})
    run.tables["identities"] = rows
    run.results["levels"] = rows
    run.results["scales"] = [s["scales"] for s in study]
    floor = c.noise_floor * max(study[-1]["scales"].values())
    verdicts = {}
    for name in names:
        v = classify_refinement(study[-2]["residuals"][name], study[-1]["residuals"][name],
                                c.ratio_low, c.ratio_high, floor)
        verdicts[name] = v
        run.check(f"identity[{name}]", v["passed"], v["ratio"], [c.ratio_low, c.ratio_high],
                  status=v["status"], noise_floor=floor)
    run.results["refinement"] = verdicts


def cmd_report(run: Run) -> None:
    sections = [("solve", cmd_solve), ("stability", cmd_stability), ("ks", cmd_ks), ("metric", cmd_metric),
                ("curvature", cmd_curvature), ("identities", cmd_identities)]
    if run.cfg.family.kind != "polystable":
        sections.append(("fibint", cmd_fibint))
    for name, fn in sections:
        sub = Run(run.cfg, name)
        fn(sub)
        run.results[name] = sub.results
        run.checks.extend({**c, "name": f"{name}.{c['name']}"} for c in sub.checks)
        run.tables.update({f"{name}_{k}": v for k, v in sub.tables.items()})
        run.grids.update(sub.grids)
        run.timings.update({f"{name}.{k}": v for k, v in sub.timings.items()})
        if sub.status != "ok":
            run.status = sub.status
            break


HANDLERS = {"solve": cmd_solve, "stability": cmd_stability, "ks": cmd_ks, "metric": cmd_metric,
            "curvature": cmd_curvature, "fibint": cmd_fibint, "identities": cmd_identities,
            "report": cmd_report}


def run_command(command: str, cfg: ExperimentConfig) -> Run:
    run = Run(cfg, command)
    HANDLERS[command](run)
    return run


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vortexmoduli", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    p.add_argument("--refine", type=int, default=None, help="number of step halvings in refinement studies")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be an unsigned integer")
            cfg = cfg.replace("run", seed=args.seed)
        if args.refine is not None:
            if args.refine < 0:
                raise ConfigError("--refine must be >= 0")
            cfg = cfg.replace("run", refine=args.refine)
        workers()
        run = run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VortexModuliError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.write(args.out)
    code = run.exit_code()
    rep = run.report()
    print(f"{args.command}: {rep['status']} ({len(run.checks) - len(rep['failed_checks'])}/{len(run.checks)} checks "
          f"passed) -> {args.out / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
