"""Acceptance suite: one test per criterion, each logging a single pass/fail line.

Heavy experiments run through the same code path as the command line, using the
configurations shipped in demos/configs.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from vortexmoduli.cli import build_triple, main, run_command, solver_config
from vortexmoduli.config import load_config
from vortexmoduli.families import twisted_triple
from vortexmoduli.hodge import HodgeComplex
from vortexmoduli.torus import make_flat_torus
from vortexmoduli.vortex import energy_terms, l2_inner, linearized_df0, solve_coupled_vortex
from vortexmoduli.bundles import hermitian_part

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"
SECOND_ORDER_IDENTITIES = ("symmetry", "d_mu_cov_plus_bracket", "dstar_mu_cov", "mu_antihol_minus_dR",
                           "laplace_R_minus_dot", "normal_coordinates")


def cfg(name, **overrides):
    c = load_config(CONFIGS / f"{name}.ini")
    for section, kw in overrides.items():
        c = c.replace(section, **kw)
    return c


def check(run, name):
    return next(c for c in run.checks if c["name"] == name)


def solved(t, config=None):
    h1, h2, _, _ = solve_coupled_vortex(t, config)
    return t.with_metrics(h1, h2)


def test_01_closed_form_fixture(acceptance):
    t0 = time.perf_counter()
    run = run_command("solve", cfg("fixture"))
    wall = time.perf_counter() - t0
    dev = run.results["closed_form"]["max_deviation"]
    res = run.results["residual"]["sup_norm"]
    steps = run.results["iterations"]
    ok = dev <= 1e-8 and res <= 1e-9 and steps <= 5 and wall < 5.0
    acceptance(1, "closed-form fixture", ok,
               f"ratio deviation {dev:.1e}, residual {res:.1e}, {steps} Newton steps, {wall:.2f} s at N=32")


def test_02_trace_integral_every_iterate(acceptance):
    worst = 0.0
    for name in ("fixture", "twisted"):
        run = run_command("solve", cfg(name))
        worst = max(worst, max(abs(r["trace_integral"]) for r in run.tables["trace"]))
    acceptance(2, "trace integral pinned", worst <= 1e-10,
               f"max |integral of tr rho1 + tr rho2| over all iterates {worst:.1e}")


def test_03_energy_identity(acceptance):
    c = cfg("twisted")
    t = solved(build_triple(c), solver_config(c))
    base, rng = t.base, np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        amp = 10 ** rng.uniform(-2, 1)
        c1 = np.linalg.solve(t.h1, hermitian_part(base.lowpass(rng, t.h1.shape[-2:], 3, amp)))
        c2 = np.linalg.solve(t.h2, hermitian_part(base.lowpass(rng, t.h2.shape[-2:], 3, amp)))
        L1, L2, _ = linearized_df0(t, c1, c2)
        lhs = l2_inner(base, L1, c1, t.h1) + l2_inner(base, L2, c2, t.h2)
        rhs = sum(energy_terms(t, c1, c2))
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    acceptance(3, "energy identity of DF0", worst <= 1e-9, f"max relative deviation over 100 draws {worst:.1e}")


def test_04_alpha_sweep(acceptance):
    run = run_command("stability", cfg("sweep"))
    rows = run.results["alpha_sweep"]
    good = all(r["converged"] == (r["alpha"] > 0) for r in rows)
    failed = [r for r in rows if r["alpha"] <= 0]
    good = good and all(r["status"] in ("degenerate", "non-convergence") for r in failed)
    summary = ", ".join(f"{r['alpha']:g}:{r['status']}" for r in rows)
    acceptance(4, "Kobayashi-Hitchin alpha sweep", good, summary)


@pytest.fixture(scope="module")
def hodge64():
    base = make_flat_torus(0.3 + 1.1j, 64)
    stable = HodgeComplex(solved(twisted_triple(base, 1.0, [0.8 + 0.2j], [0.1], twist=0.2, seed=5)))
    split = HodgeComplex(solved(twisted_triple(base, 0.0, [0.0], [0.1], twist=0.2, seed=5)))
    return stable, split


def test_05_hodge_complex(acceptance, hodge64):
    H, split = hodge64
    rng = np.random.default_rng(5)
    f = H.random(0, rng)
    dd = H.norm(H.d1(H.d0(f))) / H.norm(f)
    adj = 0.0
    for d, ds, lvl in ((H.d0, H.d0_star, 0), (H.d1, H.d1_star, 1)):
        x, y = H.random(lvl, rng), H.random(lvl + 1, rng)
        a, b = H.inner(d(x), y), H.inner(x, ds(y))
        adj = max(adj, abs(a - b) / max(abs(a), 1.0))
    green = 0.0
    for lvl in range(3):
        x = H.random(lvl, rng)
        back = H.green(lvl, H.laplacian(lvl, x)) + H.harmonic_projection(lvl, x)
        green = max(green, H.norm(back - x) / H.norm(x))
    dims = H.harmonic_dim(0), split.harmonic_dim(0)
    ok = dd <= 1e-12 and adj <= 1e-10 and green <= 1e-9 and dims[0] == 1 and dims[1] >= 2
    acceptance(5, "Hodge complex", ok,
               f"d1d0 {dd:.1e}, adjointness {adj:.1e}, G.Lap+H-Id {green:.1e}, "
               f"dim H0 stable {dims[0]}, polystable {dims[1]}")


def test_06_kodaira_spencer_harmonicity(acceptance):
    run = run_command("ks", cfg("ks"))
    first = run.results["levels"][0]
    bounds = {k: v for k, v in first.items() if k.startswith(("d_mu", "dstar_mu"))}
    refinements = {c["name"]: c for c in run.checks if c["name"].endswith("_refinement")}
    dstar = [c for n, c in refinements.items() if n.startswith("dstar_mu")]
    ok = (max(bounds.values()) <= 1e-5 and all(c["passed"] for c in refinements.values())
          and all(c["status"] == "second-order" for c in dstar))
    detail = "; ".join(f"{n.removesuffix('_refinement')} {first[n.removesuffix('_refinement')]:.1e} "
                       f"ratio {c['value']:.2f} ({c['status']})" for n, c in refinements.items())
    acceptance(6, "Kodaira-Spencer harmonicity", ok, detail)


def test_07_covariant_identities(acceptance):
    run = run_command("identities", cfg("identities"))
    ver = run.results["refinement"]
    ok = all(ver[n]["status"] == "second-order" for n in SECOND_ORDER_IDENTITIES)
    ok = ok and all(v["passed"] for v in ver.values())
    detail = ", ".join(f"{n} {ver[n]['ratio']:.2f}" for n in SECOND_ORDER_IDENTITIES)
    acceptance(7, "covariant identities", ok, f"refinement ratios {detail}")


@pytest.fixture(scope="module")
def curvature_run():
    t0 = time.perf_counter()
    run = run_command("curvature", cfg("curvature"))
    return run, time.perf_counter() - t0


def test_08_curvature_formula(acceptance, curvature_run):
    run, wall = curvature_run
    cmp = run.results["comparison"]
    ok = cmp["relative_deviation"] <= 0.02 and wall <= 600 and check(run, "curvature_symmetries")["passed"]
    acceptance(8, "curvature formula vs finite differences", ok,
               f"relative deviation {cmp['relative_deviation']:.1e} on scale {cmp['scale']:.2f}, {wall:.0f} s")


def test_09_semipositivity(acceptance, curvature_run):
    scan = curvature_run[0].results["semipositivity"]
    acceptance(9, "bisectional semipositivity", scan["min"] >= -1e-8 and scan["samples"] == 200,
               f"min over {scan['samples']} pairs {scan['min']:.1e}")


def test_10_fiber_integral(acceptance):
    run = run_command("fibint", cfg("fibint"))
    dev = run.results["relative_deviation"]
    acceptance(10, "fiber integral", dev <= 0.02, f"relative deviation {dev:.1e} on a 5x5 s-grid")


def test_11_determinism(acceptance, tmp_path, monkeypatch):
    same = []
    for name, command in (("fixture", "solve"), ("sweep", "stability")):
        outs = []
        for k, workers in enumerate(("1", "2")):
            monkeypatch.setenv("VORTEXMODULI_WORKERS", workers)
            out = tmp_path / f"{name}{k}"
            main([command, "--config", str(CONFIGS / f"{name}.ini"), "--out", str(out)])
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir() if p.name != "timings.json")
        same.append(all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files))
        assert json.loads((outs[0] / "report.json").read_text())["schema"]
    acceptance(11, "determinism", all(same), f"byte-identical artifacts for {sum(same)}/{len(same)} commands")
