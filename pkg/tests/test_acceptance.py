"""Acceptance criteria, one test each, at the stated scale and tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary section
at the end lists one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import filecmp
import math
import time

import numpy as np
import pytest

from binfir import cli
from binfir.blind import SlotPlan, gate_g, run_alg1, run_alg2
from binfir.harness import ExperimentConfig, monte_carlo_variance
from binfir.numerics import GaussianParams, default_table, f_correlation, h_correlation, orthant_oracle
from binfir.plant import BIT_LINKS, PAPER_SYSTEM, SystemSpec, Uniform
from binfir.smart import build_u, run_alg3, run_alg4

B = np.array(PAPER_SYSTEM.coefficients)
SEEDS = range(50)
S3 = math.sqrt(3.0)
UNIFORM_SYSTEM = SystemSpec((0.2, -0.2, 0.6), Uniform(0.0, 2 * S3), Uniform(-S3, S3))

# link usage of every end-to-end run made here, for the protocol-budget criterion
_BUDGETS: list[dict] = []


def _max_err(final_b):
    return float(np.abs(final_b - B).max())


def _budget(trace) -> dict:
    sent = trace.channel_log.payload >= 0
    return {
        "algorithm": trace.algorithm,
        "horizon": trace.horizon,
        "max_bits": int(sent.max(initial=0)),
        "counts": trace.channel_log.bits_per_link(1, trace.horizon),
        "truncations": int(trace.truncations),
    }


def _finals(run, spec, horizon, keys=("b_hat",), **kw):
    """Final estimates of 50 seeded runs; the traces themselves are dropped."""
    out = []
    for s in SEEDS:
        tr = run(spec, horizon, seed=s, checkpoints=[horizon], **kw)
        _BUDGETS.append(_budget(tr))
        out.append({k: tr.final(k).copy() for k in keys})
    return out


@pytest.fixture(scope="module")
def alg1_runs():
    return _finals(run_alg1, PAPER_SYSTEM, 10**6)


@pytest.fixture(scope="module")
def alg2_runs():
    return _finals(run_alg2, PAPER_SYSTEM, 4 * 10**6, keys=("b_hat", "c_u", "ct_u", "c_y", "ct_y"))


def test_criterion_01_alg1_convergence(alg1_runs, report):
    errs = np.array([_max_err(r["b_hat"]) for r in alg1_runs])
    frac = float(np.mean(errs < 0.05))
    ok = report(1, "known-input convergence", frac >= 0.9,
                f"{frac:.0%} of 50 seeds within 0.05 at t=1e6 (worst {errs.max():.4f})")
    assert ok, errs


def test_criterion_02_alg2_convergence(alg2_runs, report):
    errs = np.array([_max_err(r["b_hat"]) for r in alg2_runs])
    frac = float(np.mean(errs < 0.1))
    thr = np.array([[r[k][0] for k in ("c_u", "ct_u", "c_y", "ct_y")] for r in alg2_runs])
    thr_err = np.abs(thr - np.array([1.0, 2.0, 0.6, 1.8])).max(axis=1)
    thr_frac = float(np.mean(thr_err < 0.1))
    ok = frac >= 0.85 and thr_frac >= 0.85
    report(2, "unknown-input convergence", ok,
           f"{frac:.0%} of seeds within 0.1 (worst {errs.max():.4f}); thresholds within 0.1 of "
           f"(1, 2, 0.6, 1.8) in {thr_frac:.0%} (worst {thr_err.max():.4f})")
    assert ok


def test_criterion_03_variance_ordering(report):
    cps = [10**5]
    v1 = monte_carlo_variance(ExperimentConfig("alg1", horizon=10**5), replicas=1000, checkpoints=cps)
    v2 = monte_carlo_variance(ExperimentConfig("alg2", horizon=10**5), replicas=1000, checkpoints=cps)
    ratio = v2.by_t[-1] / v1.by_t[-1]
    n_over = int(np.sum(ratio > 2.0))
    ok = report(3, "variance ordering", n_over >= 2,
                f"alg2/alg1 normalized variance at t=1e5 over 1000 replicas: {np.round(ratio, 2).tolist()}")
    assert ok


@pytest.mark.parametrize("case", ["gaussian", "uniform"])
def test_criterion_04_smart_convergence(case, report):
    spec = PAPER_SYSTEM if case == "gaussian" else UNIFORM_SYSTEM
    lines = []
    ok = True
    for name, run in (("alg3", run_alg3), ("alg4", run_alg4)):
        runs = _finals(run, spec, 10**6, threshold=1.0, gain=1.0)
        errs = np.array([_max_err(r["b_hat"]) for r in runs])
        frac = float(np.mean(errs < 0.02))
        ok &= frac >= 0.9
        lines.append(f"{name} {frac:.0%} within 0.02 (worst {errs.max():.4f})")
    report(4, f"smart-quantizer convergence, {case}", ok, "; ".join(lines))
    assert ok


def test_criterion_05_oracle_equivalence(report):
    t0 = time.perf_counter()
    table = default_table()
    worst = 0.0
    bs = np.linspace(-1.5, 1.5, 50)
    vys = np.linspace(0.2, 4.0, 50)
    p = GaussianParams(1.0, 1.0)
    for b in bs:
        for vy in vys:
            rho = float(np.clip(b / math.sqrt(vy), -1.0, 1.0))
            ref = orthant_oracle(rho)
            worst = max(worst, abs(f_correlation(b, vy, p) - ref), abs(f_correlation(b, vy, p, table) - ref))
    # h on a grid of threshold gaps: rho = b * |ctu - cu| / |cty - cy|
    gaps_u = np.linspace(0.3, 2.5, 50)
    for gu in gaps_u:
        for b in bs:
            rho = float(np.clip(b * gu / 1.2, -1.0, 1.0))
            ref = orthant_oracle(rho)
            worst = max(worst, abs(h_correlation(0.6, 1.8, 1.0, 1.0 + gu, b) - ref),
                        abs(h_correlation(0.6, 1.8, 1.0, 1.0 + gu, b, table) - ref))
    elapsed = time.perf_counter() - t0
    ok = report(5, "oracle equivalence", worst < 1e-6 and elapsed < 60,
                f"max |F - oracle|, |h - oracle| = {worst:.2e} on 50x50 grids, quadrature and table, {elapsed:.1f} s")
    assert ok


def test_criterion_06_monotonicity(report):
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(20):
        vy, var_u = rng.uniform(0.1, 5.0, 2)
        p = GaussianParams(0.0, var_u)
        bound = math.sqrt(vy / var_u)
        b = np.sort(rng.uniform(-bound, bound, 100))
        f = np.array([f_correlation(x, vy, p) for x in b])
        violations += int(np.sum(np.diff(f) <= 0))
    ok = report(6, "monotonicity of F in b", violations == 0,
                f"{violations} violations over 20 (Vy, var_u) pairs x 100 points")
    assert ok


def test_criterion_07_determinant_identity(report):
    worst = 0.0
    detect_ok = True
    grid = np.linspace(-8.0, 8.0, 81)
    for n in range(2, 7):
        for a in grid:
            u_mat = build_u(a, 1.0, n)
            ref = (a - 1.0) ** (n - 1) * (a + n - 1.0)
            det = float(np.linalg.det(u_mat.matrix()))
            if ref != 0.0:
                worst = max(worst, abs(u_mat.determinant() - ref) / abs(ref), abs(det - ref) / abs(ref))
            else:
                worst = max(worst, abs(det))
            expected_singular = a in (1.0, 1.0 - n)
            detect_ok &= u_mat.is_singular() == expected_singular
    ok = report(7, "determinant identity", worst < 1e-9 and detect_ok,
                f"max relative error {worst:.2e} for N=2..6 on 81 points; singular exactly at a in {{1, 1-N}}: {detect_ok}")
    assert ok


def test_criterion_08_schedule(report):
    plan = SlotPlan(10**4)
    ok = True
    notes = []
    for N in range(1, 9):
        for n in range(1, N + 1):
            pairs = plan.constructible_pairs(n)
            ts = np.array([t for t, _ in pairs])
            periodic = len(pairs) > 2000 and set(np.diff(ts)) == {4}
            g = np.array([gate_g(n, j) for j in range(1, 5001)])
            period2 = bool(np.all(g[2:] == g[:-2])) and g.mean() == 0.5
            ok &= periodic and period2
    notes.append("pairs for every n <= N <= 8 recur every 4 slots up to t=1e4; g(n, j) has period 2, duty 1/2")
    ok = report(8, "constructible pairs and gate", ok, notes[0])
    assert ok


def test_criterion_09_protocol_budget(alg1_runs, alg2_runs, report):
    assert len(_BUDGETS) >= 100
    worst_bits = max(b["max_bits"] for b in _BUDGETS)
    truncations = sum(b["truncations"] for b in _BUDGETS)
    exact = True
    for b in _BUDGETS:
        # these links are scheduled on every protocol slot
        if b["algorithm"] in ("alg1", "alg2", "alg3"):
            exact &= b["counts"][BIT_LINKS[0]] == b["horizon"]
        if b["algorithm"] in ("alg1", "alg2"):
            exact &= b["counts"][BIT_LINKS[1]] == b["horizon"]
    ok = report(9, "protocol budget", worst_bits <= 1 and truncations == 0 and exact,
                f"{len(_BUDGETS)} runs: max {worst_bits} bit per slot per link, {truncations} truncations, "
                f"one bit per slot on every scheduled link: {exact}")
    assert ok


def test_criterion_10_determinism(tmp_path, report):
    ok = True
    for alg in ("alg1", "alg2", "alg3", "alg4"):
        cfg = tmp_path / f"{alg}.yaml"
        cfg.write_text(f"algorithm: {alg}\nhorizon: 50000\nseed: 17\n")
        for k in (1, 2):
            assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / f"{alg}_{k}")]) == 0
        ok &= filecmp.cmp(tmp_path / f"{alg}_1" / "trace.csv", tmp_path / f"{alg}_2" / "trace.csv", shallow=False)
        ok &= filecmp.cmp(tmp_path / f"{alg}_1" / "summary.json", tmp_path / f"{alg}_2" / "summary.json",
                          shallow=False)
    ok = report(10, "determinism", ok, "repeated CLI runs give byte-identical trace.csv and summary.json for all four schemes")
    assert ok
