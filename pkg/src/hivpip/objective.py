"""Tikhonov functional, its gradient via the adjoint, and the residual field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TimeMesh, cell_average, l2_norm_cells
from .model import ModelParams


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Samples g(t_i) of the virus load on the window [t1, t2].

    ``scale`` is a reference virus load: the misfit enters the functional as
    ``(u4 - g) / scale``.  Between samples g is linear.
    """

    times: np.ndarray
    values: np.ndarray
    t1: float
    t2: float
    scale: float = 1.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1 or times.size == 0:
            raise ValueError("observation times and values must be equal-length 1-d arrays")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("observation times must be strictly increasing")
        if not 0 <= self.t1 < self.t2:
            raise ValueError(f"need 0 <= T1 < T2, got [{self.t1}, {self.t2}]")
        if times[0] < self.t1 - 1e-9 or times[-1] > self.t2 + 1e-9:
            raise ValueError("observation times must lie inside [T1, T2]")
        if not self.scale > 0:
            raise ValueError("observation scale must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def in_window(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.t1) & (t <= self.t2)

    def __call__(self, t) -> np.ndarray:
        """g(t) by linear interpolation (held constant past the first/last sample)."""
        return np.interp(t, self.times, self.values)

    def with_values(self, values) -> "ObservationSet":
        return ObservationSet(self.times, values, self.t1, self.t2, self.scale)

    def with_scale(self, scale: float) -> "ObservationSet":
        return ObservationSet(self.times, self.values, self.t1, self.t2, scale)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,g\n")
            for t, g in zip(self.times.tolist(), self.values.tolist()):
                fh.write(f"{t!r},{g!r}\n")

    @classmethod
    def from_csv(cls, path, t1: float | None = None, t2: float | None = None, scale: float = 1.0):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times, values = data[:, 0], data[:, 1]
        return cls(
            times,
            values,
            float(times[0]) if t1 is None else t1,
            float(times[-1]) if t2 is None else t2,
            scale,
        )


@dataclass(frozen=True)
class SmoothnessWeight:
    """Plateau weight z on [t1, t2]: 1 inside, cubic smoothstep rolloff of
    width ``zeta * (t2 - t1) / 2`` at both ends, 0 outside."""

    t1: float
    t2: float
    zeta: float = 0.05

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError(f"zeta must be in (0, 1), got {self.zeta}")
        if not self.t1 < self.t2:
            raise ValueError("weight window must have t1 < t2")

    @property
    def rolloff(self) -> float:
        return 0.5 * self.zeta * (self.t2 - self.t1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.t1) & (t <= self.t2)
        rho = self.rolloff
        x = np.clip(np.minimum(t - self.t1, self.t2 - t) / rho, 0.0, 1.0)
        return np.where(inside, x * x * (3.0 - 2.0 * x), 0.0)


def weight_at(w: SmoothnessWeight, t):
    return w(t)


@dataclass(frozen=True, eq=False)
class TikhonovConfig:
    gamma: float
    eta0: np.ndarray

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "eta0", np.asarray(self.eta0, dtype=float))


def gamma_rule(sigma: float, mu: float = 0.15, sigma_floor: float = 0.01) -> float:
    """gamma = sigma^(2 mu); noise levels below ``sigma_floor`` use the floor."""
    if not 0 < mu < 0.25:
        raise ValueError("mu must lie in (0, 1/4)")
    return float(max(sigma, sigma_floor) ** (2.0 * mu))


def misfit_nodes(mesh: TimeMesh, u4, obs: ObservationSet, w: SmoothnessWeight) -> np.ndarray:
    """Adjoint source (u4 - g) z / scale^2 at every node, zero outside [T1, T2]."""
    u4 = mesh.check_nodes(u4, "u4")
    t = mesh.nodes
    inside = obs.in_window(t)
    out = np.zeros_like(t)
    out[inside] = (u4[inside] - obs(t[inside])) * w(t[inside]) / obs.scale**2
    return out


def data_misfit(mesh: TimeMesh, u4, obs: ObservationSet, w: SmoothnessWeight) -> float:
    """1/2 int_{T1}^{T2} ((u4 - g)/scale)^2 z dt by the trapezoid rule.

    The quadrature points are the mesh nodes inside the window plus the
    window ends, where u4 is linearly interpolated.
    """
    u4 = mesh.check_nodes(u4, "u4")
    t1, t2 = obs.t1, min(obs.t2, mesh.t_end)
    inner = mesh.nodes[(mesh.nodes > t1) & (mesh.nodes < t2)]
    pts = np.concatenate(([t1], inner, [t2]))
    r = (np.interp(pts, mesh.nodes, u4) - obs(pts)) / obs.scale
    return 0.5 * float(np.trapezoid(r * r * w(pts), pts))


def regularization(mesh: TimeMesh, eta, eta0, gamma: float) -> float:
    diff = mesh.check_cells(eta) - mesh.check_cells(eta0, "eta0")
    return 0.5 * gamma * float(np.sum(mesh.widths * diff * diff))


def tikhonov_value(state, obs: ObservationSet, w: SmoothnessWeight, cfg: TikhonovConfig, eta) -> float:
    mesh = state.mesh
    return data_misfit(mesh, state.values[:, 3], obs, w) + regularization(mesh, eta, cfg.eta0, cfg.gamma)


def gradient_nodal(state, adjoint, eta, cfg: TikhonovConfig, p: ModelParams) -> np.ndarray:
    """G_k = gamma (eta_k - eta0_k) + alpha u2_k (lam3_k - lam1_k), with cell-midpoint u2, lam."""
    mesh = state.mesh
    if not adjoint.mesh.same_nodes(mesh):
        raise ValueError("state and adjoint live on different meshes")
    eta = mesh.check_cells(eta, "eta")
    eta0 = mesh.check_cells(cfg.eta0, "eta0")
    u2 = cell_average(state.values[:, 1])
    lam = adjoint.values
    dlam = cell_average(lam[:, 2] - lam[:, 0])
    return cfg.gamma * (eta - eta0) + p.alpha * u2 * dlam


def residual_field(state, adjoint, eta, cfg: TikhonovConfig, p: ModelParams) -> np.ndarray:
    """Pointwise residual of the optimality condition; drives stopping and refinement."""
    return gradient_nodal(state, adjoint, eta, cfg, p)


def stationary_update(state, adjoint, cfg: TikhonovConfig, p: ModelParams) -> np.ndarray:
    """eta0 + (alpha / gamma) u2 (lam1 - lam3): the eta that zeroes the residual for frozen u, lam."""
    u2 = cell_average(state.values[:, 1])
    dlam = cell_average(adjoint.values[:, 0] - adjoint.values[:, 2])
    return cfg.eta0 + (p.alpha / cfg.gamma) * u2 * dlam


def relative_error(mesh: TimeMesh, eta_exact, eta_rec) -> float:
    eta_exact = mesh.check_cells(eta_exact, "exact eta")
    norm = l2_norm_cells(mesh, eta_exact)
    if norm == 0:
        raise ValueError("relative error undefined for a zero reference")
    return l2_norm_cells(mesh, eta_exact - mesh.check_cells(eta_rec)) / norm


def write_cell_csv(path, mesh: TimeMesh, values, name: str = "value") -> None:
    values = mesh.check_cells(values)
    with open(path, "w") as fh:
        fh.write(f"t,{name}\n")
        for t, v in zip(mesh.midpoints.tolist(), values.tolist()):
            fh.write(f"{t!r},{v!r}\n")
