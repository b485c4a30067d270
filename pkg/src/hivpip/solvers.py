"""Implicit Euler with Newton iterations for the state and adjoint systems.

Forward, cell k = (t_k, t_{k+1}]:   u^{k+1} - tau_k f(u^{k+1}, eta_k) - u^k = 0
Backward, from lam(T) = 0:          lam^k + tau_k f~(lam^k; u^k, eta_k) - lam^{k+1} = 0

Node ``k`` of the adjoint uses the efficacy of cell ``k`` (the last node has
no cell of its own, and its value is fixed at zero anyway).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import TimeMesh
from .model import (
    DEFAULT_INITIAL_STATE,
    ModelParams,
    adjoint_jacobian,
    forward_jacobian,
    forward_rhs,
)


class SolverError(RuntimeError):
    """Base class for time-stepping failures."""

    cell: int | None = None


class NewtonConvergenceError(SolverError):
    def __init__(self, x, residual_norm: float, iterations: int, cell: int | None = None):
        self.x = np.array(x)
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.cell = cell
        where = "" if cell is None else f" in cell {cell}"
        super().__init__(
            f"Newton did not converge{where} after {iterations} iterations "
            f"(residual {residual_norm:.3e})"
        )


class SingularJacobianError(SolverError):
    def __init__(self, x, cell: int | None = None):
        self.x = np.array(x)
        self.cell = cell
        where = "" if cell is None else f" in cell {cell}"
        super().__init__(f"singular Newton matrix{where}")


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping rule: ``max|F(x)| <= tol * max(1, max|x|)``."""

    tol: float = 1e-12
    max_iter: int = 25

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("Newton needs at least one iteration")


def newton_solve_step(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    guess,
    cfg: NewtonConfig = NewtonConfig(),
    history: list | None = None,
) -> np.ndarray:
    """Solve ``residual(x) = 0`` by x <- x - J(x)^{-1} F(x).

    If ``history`` is given, the residual norm of every iterate is appended.
    """
    x = np.array(guess, dtype=float)
    for it in range(cfg.max_iter + 1):
        F = residual(x)
        norm = float(np.abs(F).max())
        if history is not None:
            history.append(norm)
        if not np.isfinite(norm):
            break
        if norm <= cfg.tol * max(1.0, float(np.abs(x).max())):
            return x
        if it == cfg.max_iter:
            break
        try:
            x = x - np.linalg.solve(jacobian(x), F)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(x) from None
    raise NewtonConvergenceError(x, norm, cfg.max_iter)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    mesh: TimeMesh
    values: np.ndarray  # (n_nodes, 4)

    def at(self, t):
        from .mesh import interpolate_node_field
        return interpolate_node_field(self.mesh, self.values, t)

    def to_csv(self, path, names=("u1", "u2", "u3", "u4")):
        write_node_csv(path, self.mesh, self.values, names)


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    mesh: TimeMesh
    values: np.ndarray  # (n_nodes, 4); last row is exactly zero

    def to_csv(self, path):
        write_node_csv(path, self.mesh, self.values, ("lam1", "lam2", "lam3", "lam4"))


def write_node_csv(path, mesh: TimeMesh, values: np.ndarray, names) -> None:
    with open(path, "w") as fh:
        fh.write("t," + ",".join(names) + "\n")
        for t, row in zip(mesh.nodes.tolist(), np.asarray(values).tolist()):
            fh.write(",".join(repr(v) for v in (t, *row)) + "\n")


def implicit_euler_step(
    p: ModelParams,
    prev: np.ndarray,
    tau: float,
    eta: float,
    cfg: NewtonConfig = NewtonConfig(),
    max_depth: int = 8,
) -> np.ndarray:
    """Solve u - tau f(u, eta) - prev = 0 for the physically meaningful root.

    Newton starts from ``prev``.  On coarse cells the system can have a
    second root with negative populations that attracts the warm start; when
    that happens (or Newton fails) the start is replaced by the result of two
    half steps, recursively, and Newton is rerun on the full step.
    """
    eye = np.eye(4)

    def solve(guess):
        return newton_solve_step(
            lambda x: x - tau * forward_rhs(p, x, eta) - prev,
            lambda x: eye - tau * forward_jacobian(p, x, eta),
            guess,
            cfg,
        )

    physical = bool(np.all(prev >= 0))
    try:
        x = solve(prev)
        if not physical or np.all(x >= 0):
            return x
    except SolverError:
        if max_depth == 0:
            raise
    if max_depth == 0:
        return x
    half = implicit_euler_step(p, prev, 0.5 * tau, eta, cfg, max_depth - 1)
    half = implicit_euler_step(p, half, 0.5 * tau, eta, cfg, max_depth - 1)
    return solve(half)


def solve_forward(
    p: ModelParams,
    eta,
    mesh: TimeMesh,
    u0=DEFAULT_INITIAL_STATE,
    cfg: NewtonConfig = NewtonConfig(),
) -> StateTrajectory:
    eta = mesh.check_cells(eta, "eta")
    tau = mesh.widths
    u = np.empty((mesh.n_nodes, 4))
    u[0] = u0
    for k in range(mesh.n_cells):
        try:
            u[k + 1] = implicit_euler_step(p, u[k], float(tau[k]), float(eta[k]), cfg)
        except SolverError as exc:
            exc.cell = k
            raise
    return StateTrajectory(mesh, u)


def solve_adjoint(
    p: ModelParams,
    state: StateTrajectory,
    eta,
    mismatch,
    cfg: NewtonConfig = NewtonConfig(),
) -> AdjointTrajectory:
    """March the adjoint backwards from lam(T) = 0.

    ``mismatch`` holds the data source term (u4 - g) z at every node (zero
    outside the observation window); see ``objective.misfit_nodes``.  ``cfg``
    is accepted for symmetry with ``solve_forward``; the linear step needs no
    iteration.
    """
    mesh = state.mesh
    eta = mesh.check_cells(eta, "eta")
    mismatch = mesh.check_nodes(mismatch, "mismatch")
    tau = mesh.widths
    u = state.values
    lam = np.zeros((mesh.n_nodes, 4))
    eye = np.eye(4)
    # The step equation is linear in lam, so Newton from any start converges
    # in one iteration: (I + tau_k A_k) lam^k = lam^{k+1} - tau_k m_k e4.
    for k in range(mesh.n_cells - 1, -1, -1):
        rhs = lam[k + 1].copy()
        rhs[3] -= tau[k] * mismatch[k]
        try:
            lam[k] = np.linalg.solve(eye + tau[k] * adjoint_jacobian(p, u[k], float(eta[k])), rhs)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(lam[k + 1], cell=k) from None
    return AdjointTrajectory(mesh, lam)
