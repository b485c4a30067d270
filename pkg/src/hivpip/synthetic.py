"""Synthetic truth, noisy virus-load observations and the initial efficacy guess."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .mesh import TimeMesh, interpolate_node_field
from .model import DEFAULT_INITIAL_STATE, ModelParams
from .objective import ObservationSet
from .solvers import NewtonConfig, StateTrajectory, solve_forward


@dataclass(frozen=True)
class TruthSpec:
    """Closed-form efficacy used to generate data.

    kinds: ``exp_decay`` (a * exp(-rate t) + offset), ``constant`` (level),
    ``table`` (piecewise-linear through ``table_t``, ``table_eta``).
    """

    kind: str = "constant"
    a: float = 0.7
    rate: float = 1.0
    offset: float = 0.05
    level: float = 0.7
    table_t: tuple = ()
    table_eta: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exp_decay", "constant", "table"):
            raise ValueError(f"unknown truth kind {self.kind!r}")

    @classmethod
    def exp_decay(cls, a=0.7, rate=1.0, offset=0.05):
        return cls("exp_decay", a=a, rate=rate, offset=offset)

    @classmethod
    def constant(cls, level=0.7):
        return cls("constant", level=level)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "exp_decay":
            return self.a * np.exp(-self.rate * t) + self.offset
        if self.kind == "constant":
            return np.full_like(t, self.level)
        return np.interp(t, self.table_t, self.table_eta)

    def describe(self) -> dict:
        if self.kind == "exp_decay":
            return {"kind": self.kind, "a": self.a, "rate": self.rate, "offset": self.offset}
        if self.kind == "constant":
            return {"kind": self.kind, "level": self.level}
        return {"kind": self.kind, "t": list(self.table_t), "eta": list(self.table_eta)}


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.sigma <= 1:
            raise ValueError(f"noise level must be in [0, 1], got {self.sigma}")


@dataclass(frozen=True)
class ObservationLayout:
    t1: float
    t2: float = 300.0
    n_points: int = 20

    def __post_init__(self):
        if not 0 <= self.t1 < self.t2:
            raise ValueError(f"need 0 <= T1 < T2, got [{self.t1}, {self.t2}]")
        if self.n_points < 1:
            raise ValueError("need at least one observation point")

    @property
    def times(self) -> np.ndarray:
        if self.n_points == 1:
            return np.array([self.t2])
        return np.linspace(self.t1, self.t2, self.n_points)


@dataclass(frozen=True, eq=False)
class SyntheticData:
    """Clean observations plus the truth trajectory they were sampled from."""

    observations: ObservationSet
    trajectory: StateTrajectory
    truth: TruthSpec = field(default_factory=TruthSpec)


def sample_truth(spec: TruthSpec, mesh: TimeMesh) -> np.ndarray:
    """Truth sampled at cell midpoints, clamped to [0, 1]."""
    if spec.kind == "table":
        if len(spec.table_t) < 1 or spec.table_t[0] > 0 or spec.table_t[-1] < mesh.t_end:
            raise ValueError("efficacy table does not cover [0, T]")
    return np.clip(spec(mesh.midpoints), 0.0, 1.0)


def generate_observations(
    p: ModelParams,
    truth: TruthSpec,
    layout: ObservationLayout,
    fine_mesh: TimeMesh,
    u0=DEFAULT_INITIAL_STATE,
    newton: NewtonConfig = NewtonConfig(),
) -> SyntheticData:
    if layout.t2 > fine_mesh.t_end:
        raise ValueError("observation window extends past the end of the mesh")
    traj = solve_forward(p, sample_truth(truth, fine_mesh), fine_mesh, u0, newton)
    times = layout.times
    g = interpolate_node_field(fine_mesh, traj.values[:, 3], times)
    obs = ObservationSet(times, g, layout.t1, layout.t2)
    return SyntheticData(obs, traj, truth)


def add_noise(obs: ObservationSet, noise: NoiseSpec) -> ObservationSet:
    """v <- v (1 + sigma a_i), a_i ~ U[-1, 1] from the seeded generator."""
    return obs.with_values(noisy_values(obs.values, noise.sigma, np.random.default_rng(noise.seed)))


def noisy_values(values, sigma: float, rng: np.random.Generator) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    draws = rng.uniform(-1.0, 1.0, size=values.shape)
    return values * (1.0 + sigma * draws)


def noisy_state_samples(traj: StateTrajectory, mesh: TimeMesh, noise: NoiseSpec):
    """Noisy u2, u3 at the nodes of ``mesh`` with independent draws per component."""
    u2 = interpolate_node_field(traj.mesh, traj.values[:, 1], mesh.nodes)
    u3 = interpolate_node_field(traj.mesh, traj.values[:, 2], mesh.nodes)
    rng2, rng3 = (np.random.default_rng(s) for s in np.random.SeedSequence(noise.seed).spawn(2))
    return noisy_values(u2, noise.sigma, rng2), noisy_values(u3, noise.sigma, rng3)


class DegenerateDataError(ValueError):
    pass


def raw_efficacy_estimate(u2, u3, p: ModelParams, mesh: TimeMesh) -> np.ndarray:
    """Per-cell eta from the third state equation with a forward difference."""
    u2 = mesh.check_nodes(u2, "u2")
    u3 = mesh.check_nodes(u3, "u3")
    if np.any(u2[:-1] <= 0):
        raise DegenerateDataError("u2 samples must be strictly positive")
    du3 = np.diff(u3) / mesh.widths
    return 1.0 - (du3 + p.delta * u3[:-1]) / (p.alpha * u2[:-1])


def initial_guess_eta0(u2, u3, p: ModelParams, mesh: TimeMesh, fit_degree: int = 3) -> np.ndarray:
    """Least-squares polynomial through the raw estimates, evaluated per cell, clamped to [0, 1]."""
    if not 0 <= fit_degree <= 6:
        raise ValueError("fit degree must be between 0 and 6")
    raw = raw_efficacy_estimate(u2, u3, p, mesh)
    deg = min(fit_degree, mesh.n_cells - 1)
    poly = Polynomial.fit(mesh.midpoints, raw, deg, domain=[0.0, mesh.t_end])
    return np.clip(poly(mesh.midpoints), 0.0, 1.0)
