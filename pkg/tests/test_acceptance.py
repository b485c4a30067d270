"""Acceptance gate.  Each criterion prints one PASS/FAIL line.

Run on its own with ``python3 -m pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hivpip.cli import main as cli_main
from hivpip.estimates import residual_bounds
from hivpip.experiment import TEST1, TEST2, prepare_case, run_case
from hivpip.mesh import TimeMesh, transfer_cell_field
from hivpip.model import ModelParams
from hivpip.objective import TikhonovConfig, gradient_nodal, residual_field
from hivpip.optimizer import OptimizerConfig, gradient_check, mark_cells, run_cga
from hivpip.solvers import solve_adjoint, solve_forward


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float):
        with capsys.disabled():
            print(f"\nACCEPTANCE criterion {number}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f} s)")

    return emit


def _error_after(errors, level: int) -> float:
    """Error at ``level``, or at the last level reached if refinement stopped earlier."""
    return float(errors[min(level, len(errors) - 1)])


# ---------------------------------------------------------------- 1


def _discrepancies(seed: int) -> list:
    inputs = prepare_case(TEST2.with_(sigma=0.0, n_cells=14))
    directions = np.random.default_rng(seed).standard_normal((10, 14))
    out = []
    for halvings in range(3):
        r = 2**halvings
        mesh = TimeMesh.uniform(300.0, 14 * r)
        eta0 = np.repeat(inputs.eta0, r)
        gc = gradient_check(inputs.problem, mesh, eta0, eta0, [np.repeat(d, r) for d in directions])
        out.append(gc.aggregate_discrepancy)
    return out


@settings(max_examples=4, deadline=None, derandomize=True)
@given(st.integers(0, 2**32 - 1))
def _check_gradient(seed):
    d = _discrepancies(seed)
    assert d[1] <= 1.2 * d[0] and d[2] <= 1.2 * d[1], d


def test_criterion1_gradient_consistency(report):
    t = time.perf_counter()
    try:
        _check_gradient()
        ok, detail = True, "adjoint vs central differences, discrepancy shrinks under two halvings"
    except AssertionError as exc:
        ok, detail = False, f"discrepancies {exc}"
    elapsed = time.perf_counter() - t
    ok = ok and elapsed < 5.0
    report(1, ok, detail, elapsed)
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion2_forward_order(report):
    t = time.perf_counter()
    p = ModelParams()
    ref = solve_forward(p, np.full(2**14, 0.7), TimeMesh.uniform(300.0, 2**14)).values[-1]
    errs = []
    for n in (112, 224, 448, 896, 1792):
        errs.append(np.linalg.norm(solve_forward(p, np.full(n, 0.7), TimeMesh.uniform(300.0, n)).values[-1] - ref))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    elapsed = time.perf_counter() - t
    ok = bool(np.all((ratios >= 1.7) & (ratios <= 2.3))) and elapsed < 5.0
    report(2, ok, "halving ratios " + ", ".join(f"{r:.3f}" for r in ratios), elapsed)
    assert ok


# ---------------------------------------------------------------- 3 and 7


@pytest.fixture(scope="module")
def zero_noise_run():
    t = time.perf_counter()
    res = run_case(TEST2.with_(sigma=0.0, t1=25.0, optimizer=OptimizerConfig(max_refinements=4)))
    return res, time.perf_counter() - t


def test_criterion3_zero_noise_recovery(report, zero_noise_run):
    res, elapsed = zero_noise_run
    errors = res.errors
    ok = bool(np.nanmin(errors) <= 0.05) and len(errors) <= 5 and elapsed < 10.0
    report(3, ok, "e_eta per level " + ", ".join(f"{e:.4f}" for e in errors), elapsed)
    assert ok


def test_criterion7_estimator_nonincreasing(report, zero_noise_run):
    res, elapsed = zero_noise_run
    bounds = residual_bounds(res.report, res.inputs.problem.gamma)
    ok = bool(np.all(np.diff(bounds) <= 0))
    report(7, ok, "residual bound per level " + ", ".join(f"{b:.4g}" for b in bounds), elapsed)
    assert ok


# ---------------------------------------------------------------- 4 and 5


def _trend(base, t1: float, seeds=range(10)):
    cfg = base.with_(t1=t1, optimizer=OptimizerConfig(max_refinements=3))
    level0, level3 = [], []
    for seed in seeds:
        errors = run_case(cfg.with_(seed=seed)).errors
        level0.append(errors[0])
        level3.append(_error_after(errors, 3))
    return float(np.mean(level0)), float(np.mean(level3))


def test_criterion4_constant_truth_trend(report):
    t = time.perf_counter()
    parts, ok = [], True
    for t1 in (25.0, 50.0):
        e0, e3 = _trend(TEST2.with_(sigma=0.05), t1)
        ok &= e3 <= 0.5 * e0
        parts.append(f"T1={t1:g}: {e0:.4f} -> {e3:.4f} (ratio {e3 / e0:.3f})")
    elapsed = time.perf_counter() - t
    ok = ok and elapsed < 60.0
    report(4, ok, "; ".join(parts) + ", need ratio <= 0.5", elapsed)
    assert ok


def test_criterion5_exp_truth_trend(report):
    t = time.perf_counter()
    e0, e3 = _trend(TEST1.with_(sigma=0.05), 50.0)
    elapsed = time.perf_counter() - t
    ok = e3 <= 0.6 * e0 and elapsed < 60.0
    report(5, ok, f"T1=50: {e0:.4f} -> {e3:.4f} (ratio {e3 / e0:.3f}), need ratio <= 0.6", elapsed)
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion6_invariants(report, tmp_path):
    t = time.perf_counter()
    checks = {}
    p = ModelParams()
    inputs = prepare_case(TEST2.with_(sigma=0.05))
    mesh, problem = inputs.mesh, inputs.problem
    eta = inputs.eta0

    state = solve_forward(p, eta, mesh)
    rng = np.random.default_rng(7)
    m1, m2 = rng.standard_normal((2, mesh.n_nodes))
    lam1 = solve_adjoint(p, state, eta, m1).values
    lam2 = solve_adjoint(p, state, eta, m2).values
    lam12 = solve_adjoint(p, state, eta, 2.5 * m1 - 0.75 * m2).values
    checks["adjoint terminal value is zero"] = bool(np.all(lam1[-1] == 0.0) and np.all(lam12[-1] == 0.0))
    checks["adjoint linear in mismatch"] = bool(
        np.max(np.abs(lam12 - (2.5 * lam1 - 0.75 * lam2))) <= 1e-10 * max(1.0, np.max(np.abs(lam12)))
    )

    fine = mesh.refine(range(mesh.n_cells))
    eta0_fine = transfer_cell_field(mesh, inputs.eta0, fine)
    res = run_cga(problem, fine, eta0_fine, eta0_fine, OptimizerConfig(max_cg_iters=15))
    checks["eta iterates stay in [0, 1]"] = all(np.all((r.eta >= 0) & (r.eta <= 1)) for r in res.log.records)

    cfg = TikhonovConfig(problem.gamma, inputs.eta0)
    adj = solve_adjoint(p, state, eta, rng.standard_normal(mesh.n_nodes))
    R = residual_field(state, adj, eta, cfg, p)
    G = gradient_nodal(state, adj, eta, cfg, p)
    checks["residual equals gradient"] = bool(np.max(np.abs(R - G)) <= 1e-14)

    scale_ok = True
    for c in (1e-8, 0.3, 7.0, 1e9):
        for beta1 in (0.05, 0.1, 0.5):
            scale_ok &= mark_cells(c * R, beta1) == mark_cells(R, beta1)
    checks["mark_cells scale invariant"] = scale_ok

    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        cli_main(["run", "--test", "test2", "--sigma", "0.05", "--t1", "25", "--seed", "3",
                  "--max-refinements", "1", "--out", str(out)])
        outputs.append({f.relative_to(out).as_posix(): f.read_bytes() for f in sorted(out.rglob("*")) if f.is_file()})
    checks["byte-identical reruns"] = outputs[0] == outputs[1] and len(outputs[0]) > 5

    elapsed = time.perf_counter() - t
    failed = [name for name, ok in checks.items() if not ok]
    ok = not failed and elapsed < 10.0
    report(6, ok, "all invariants hold" if not failed else "failed: " + ", ".join(failed), elapsed)
    assert ok
