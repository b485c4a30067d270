"""Conjugate-gradient minimization of the Tikhonov functional and the
adaptive time-mesh refinement loop built on top of it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mesh import TimeMesh, inner_cells, l2_norm_cells, transfer_cell_field
from .model import DEFAULT_INITIAL_STATE, ModelParams
from .objective import (
    ObservationSet,
    SmoothnessWeight,
    TikhonovConfig,
    misfit_nodes,
    residual_field,
    tikhonov_value,
)
from .solvers import NewtonConfig, SolverError, solve_adjoint, solve_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    theta: float = 1e-7
    beta1: float = 0.1
    max_cg_iters: int = 50
    max_refinements: int = 6
    stabilization_tol: float = 1e-6
    growth_factor: float = 2.0
    refine_neighbours: bool = False
    # "secant": curvature along d from a gradient difference; "gamma": curvature = gamma
    step_rule: str = "secant"

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0 < self.beta1 < 1:
            raise ValueError("beta1 must lie in (0, 1)")
        if self.max_cg_iters < 1:
            raise ValueError("max_cg_iters must be at least 1")
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be nonnegative")
        if not self.growth_factor > 1:
            raise ValueError("growth_factor must exceed 1")
        if self.step_rule not in ("secant", "gamma"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything that stays fixed while eta is being reconstructed."""

    params: ModelParams
    obs: ObservationSet
    weight: SmoothnessWeight
    gamma: float
    u0: tuple = DEFAULT_INITIAL_STATE
    newton: NewtonConfig = NewtonConfig()


@dataclass
class Evaluation:
    """State, adjoint, functional and residual at one eta."""

    eta: np.ndarray
    state: object
    adjoint: object
    J: float
    residual: np.ndarray
    residual_norm: float


def evaluate(problem: Problem, mesh: TimeMesh, eta, eta0) -> Evaluation:
    eta = np.asarray(eta, dtype=float)
    cfg = TikhonovConfig(problem.gamma, eta0)
    state = solve_forward(problem.params, eta, mesh, problem.u0, problem.newton)
    source = misfit_nodes(mesh, state.values[:, 3], problem.obs, problem.weight)
    adjoint = solve_adjoint(problem.params, state, eta, source, problem.newton)
    R = residual_field(state, adjoint, eta, cfg, problem.params)
    J = tikhonov_value(state, problem.obs, problem.weight, cfg, eta)
    return Evaluation(eta, state, adjoint, J, R, l2_norm_cells(mesh, R))


def cg_step(mesh: TimeMesh, G, G_prev=None, d_prev=None):
    """Fletcher-Reeves direction; falls back to -G when the result is not a descent direction."""
    G = mesh.check_cells(G)
    if G_prev is None or d_prev is None:
        return -G, 0.0
    den = inner_cells(mesh, G_prev, G_prev)
    if den == 0:
        return -G, 0.0
    beta = inner_cells(mesh, G, G) / den
    d = -G + beta * np.asarray(d_prev, dtype=float)
    if inner_cells(mesh, G, d) >= 0:
        return -G, 0.0
    return d, beta


def step_size(mesh: TimeMesh, G, d, gamma: float) -> float:
    """r = -(G, d) / (gamma ||d||^2).

    ``gamma`` is the curvature assumed along ``d``; passing the Tikhonov
    weight itself treats the misfit as flat.
    """
    dd = inner_cells(mesh, d, d)
    if dd == 0:
        raise ValueError("zero search direction")
    return -inner_cells(mesh, G, d) / (gamma * dd)


def secant_curvature(problem: Problem, mesh: TimeMesh, ev: "Evaluation", d, eta0, rel_step: float = 1e-3) -> float:
    """(d, G(eta + h d) - G(eta)) / (h ||d||^2), floored at gamma.

    The probe point is not projected onto [0, 1]; the solvers accept any eta.
    """
    h = rel_step / float(np.max(np.abs(d)))
    try:
        probe = evaluate(problem, mesh, ev.eta + h * d, eta0)
    except SolverError:
        return problem.gamma
    curv = inner_cells(mesh, probe.residual - ev.residual, d) / (h * inner_cells(mesh, d, d))
    return max(curv, problem.gamma)


@dataclass
class IterationRecord:
    m: int
    J: float
    grad_norm: float
    residual_norm: float
    step: float | None
    beta: float | None
    eta: np.ndarray = field(repr=False)


@dataclass
class IterationLog:
    records: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([r.residual_norm for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("m,J,grad_norm,residual_norm,step,beta\n")
            for r in self.records:
                cols = (r.m, r.J, r.grad_norm, r.residual_norm, r.step, r.beta)
                fh.write(",".join("" if c is None else repr(c) for c in cols) + "\n")


@dataclass
class CGAResult:
    eta: np.ndarray
    log: IterationLog
    best: Evaluation


def run_cga(problem: Problem, mesh: TimeMesh, eta_init, eta0, ocfg: OptimizerConfig = OptimizerConfig()) -> CGAResult:
    """Iterate until the residual is below theta, grows abruptly, eta stabilizes,
    or the iteration budget runs out.  Returns the iterate with the smallest
    residual norm."""
    eta = np.clip(mesh.check_cells(eta_init, "eta_init"), 0.0, 1.0)
    eta0 = mesh.check_cells(eta0, "eta0")
    log_ = IterationLog()
    best = None
    G_prev = d_prev = None
    m = 0
    while True:
        try:
            ev = evaluate(problem, mesh, eta, eta0)
        except SolverError as exc:
            if best is None:
                raise SolverError(f"CG iteration {m}: {exc}") from exc
            log.warning("CG iteration %d: %s; keeping the best iterate", m, exc)
            log_.stop_reason = "solver failure"
            break
        rec = IterationRecord(m, ev.J, ev.residual_norm, ev.residual_norm, None, None, eta.copy())
        log_.records.append(rec)
        if best is None or ev.residual_norm < best.residual_norm:
            best = ev
        if ev.residual_norm <= ocfg.theta:
            log_.stop_reason = "residual below tolerance"
            break
        if ev.residual_norm > ocfg.growth_factor * best.residual_norm:
            log_.stop_reason = "residual grew"
            break
        if m >= ocfg.max_cg_iters:
            log_.stop_reason = "iteration limit"
            break
        d, beta = cg_step(mesh, ev.residual, G_prev, d_prev)
        curvature = problem.gamma
        if ocfg.step_rule == "secant":
            curvature = secant_curvature(problem, mesh, ev, d, eta0)
        r = step_size(mesh, ev.residual, d, curvature)
        rec.step, rec.beta = r, beta
        new_eta = np.clip(eta + r * d, 0.0, 1.0)
        change = l2_norm_cells(mesh, new_eta - eta)
        scale = l2_norm_cells(mesh, eta)
        G_prev, d_prev = ev.residual, d
        eta = new_eta
        m += 1
        if change <= ocfg.stabilization_tol * max(scale, np.finfo(float).tiny):
            # the stabilized iterate still gets evaluated so the log is complete
            try:
                ev = evaluate(problem, mesh, eta, eta0)
            except SolverError as exc:
                log.warning("CG iteration %d: %s; keeping the best iterate", m, exc)
                log_.stop_reason = "solver failure"
                break
            log_.records.append(IterationRecord(m, ev.J, ev.residual_norm, ev.residual_norm, None, None, eta.copy()))
            if ev.residual_norm < best.residual_norm:
                best = ev
            log_.stop_reason = "eta stabilized"
            break
    log.debug("CGA on %d cells: %d iterations, %s", mesh.n_cells, len(log_), log_.stop_reason)
    return CGAResult(best.eta.copy(), log_, best)


def mark_cells(R, beta1: float) -> set:
    """Cells where |R| >= beta1 * max |R|."""
    R = np.abs(np.asarray(R, dtype=float))
    if R.size == 0:
        raise ValueError("empty residual field")
    top = R.max()
    if top == 0:
        return set()
    return set(np.flatnonzero(R >= beta1 * top).tolist())


@dataclass
class LevelRecord:
    level: int
    mesh: TimeMesh
    eta: np.ndarray
    eta0: np.ndarray
    residual: np.ndarray
    residual_norm: float
    marked: list
    cg_iterations: int
    stop_reason: str
    log: IterationLog = field(repr=False)
    state: object = field(repr=False, default=None)
    relative_error: float | None = None

    @property
    def n_cells(self) -> int:
        return self.mesh.n_cells


@dataclass
class RefinementReport:
    levels: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.levels)

    @property
    def final(self) -> LevelRecord:
        return self.levels[-1]

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([lv.residual_norm for lv in self.levels])

    @property
    def errors(self) -> np.ndarray:
        return np.array([np.nan if lv.relative_error is None else lv.relative_error for lv in self.levels])


def run_acga(
    problem: Problem,
    mesh: TimeMesh,
    eta_init,
    eta0,
    ocfg: OptimizerConfig = OptimizerConfig(),
    truth=None,
) -> RefinementReport:
    """CGA on successively refined meshes.

    ``truth``, if given, is a callable t -> eta used to fill in relative
    errors (sampled at cell midpoints of each level's mesh).
    """
    from .objective import relative_error

    report = RefinementReport()
    eta_start = mesh.check_cells(eta_init, "eta_init")
    eta0 = mesh.check_cells(eta0, "eta0")
    while True:
        res = run_cga(problem, mesh, eta_start, eta0, ocfg)
        marked = sorted(mark_cells(res.best.residual, ocfg.beta1))
        rec = LevelRecord(
            level=len(report.levels),
            mesh=mesh,
            eta=res.eta,
            eta0=eta0,
            residual=res.best.residual,
            residual_norm=res.best.residual_norm,
            marked=marked,
            cg_iterations=len(res.log) - 1,
            stop_reason=res.log.stop_reason,
            log=res.log,
            state=res.best.state,
        )
        if truth is not None:
            exact = np.clip(truth(mesh.midpoints), 0.0, 1.0)
            rec.relative_error = relative_error(mesh, exact, res.eta)
        report.levels.append(rec)
        log.info(
            "level %d: %d cells, |R| = %.4g, %d CG iterations (%s)",
            rec.level, mesh.n_cells, rec.residual_norm, rec.cg_iterations, rec.stop_reason,
        )
        if len(report.levels) > 1:
            prev = report.levels[-2].residual_norm
            if rec.residual_norm > (1.0 - ocfg.stabilization_tol) * prev:
                report.stop_reason = "residual did not decrease"
                break
        if rec.level >= ocfg.max_refinements:
            report.stop_reason = "refinement limit"
            break
        if not marked:
            report.stop_reason = "nothing to refine"
            break
        child = mesh.refine(marked, neighbours=ocfg.refine_neighbours)
        eta_start = transfer_cell_field(mesh, res.eta, child)
        eta0 = transfer_cell_field(mesh, eta0, child)
        mesh = child
    return report


@dataclass
class GradientCheck:
    """Adjoint directional derivatives against central differences of J."""

    adjoint: np.ndarray
    finite_difference: np.ndarray

    @property
    def relative_discrepancy(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.finite_difference), np.finfo(float).tiny)
        return np.abs(self.adjoint - self.finite_difference) / scale

    @property
    def aggregate_discrepancy(self) -> float:
        """||adjoint - fd|| / ||fd|| over all directions at once."""
        return float(np.linalg.norm(self.adjoint - self.finite_difference) / np.linalg.norm(self.finite_difference))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("direction,adjoint,finite_difference,relative_discrepancy\n")
            for i, (a, f, r) in enumerate(zip(self.adjoint, self.finite_difference, self.relative_discrepancy)):
                fh.write(f"{i},{float(a)!r},{float(f)!r},{float(r)!r}\n")


def gradient_check(problem: Problem, mesh: TimeMesh, eta, eta0, directions, h: float = 1e-5) -> GradientCheck:
    """Compare (G, d) with (J(eta + h d) - J(eta - h d)) / 2h for each direction d.

    The two differ by the discretization gap between the adjoint of the
    continuous problem and the derivative of the discrete functional, which
    shrinks like the mesh width.
    """
    eta = mesh.check_cells(eta, "eta")
    eta0 = mesh.check_cells(eta0, "eta0")
    G = evaluate(problem, mesh, eta, eta0).residual
    adj, fd = [], []
    for d in directions:
        d = mesh.check_cells(d, "direction")
        plus = evaluate(problem, mesh, eta + h * d, eta0).J
        minus = evaluate(problem, mesh, eta - h * d, eta0).J
        adj.append(inner_cells(mesh, G, d))
        fd.append((plus - minus) / (2.0 * h))
    return GradientCheck(np.array(adj), np.array(fd))
