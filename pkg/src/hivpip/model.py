"""HIV infection dynamics under a reverse-transcriptase inhibitor.

State ``u = (u1, u2, u3, u4)``: uninfected T cells, pre-RT infected cells,
post-RT infected cells, free virus (all per mm^3).  ``eta`` in [0, 1] is the
drug efficacy.  The adjoint right-hand side is ``-(df/du)^T lam`` plus the
data misfit in the fourth component.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

DEFAULT_INITIAL_STATE = (300.0, 10.0, 10.0, 10.0)


@dataclass(frozen=True)
class ModelParams:
    s: float = 10.0        # T-cell inflow, mm^-3 day^-1
    mu: float = 0.01       # T-cell death, day^-1
    k: float = 2.4e-5      # infection rate, mm^3 day^-1
    mu1: float = 0.015     # infected-cell death, day^-1
    alpha: float = 0.4     # pre-RT -> post-RT transition, day^-1
    b: float = 0.05        # reversion to uninfected, day^-1
    delta: float = 0.26    # death of actively infected cells, day^-1
    c: float = 2.4         # virus clearance, day^-1
    N: float = 1000.0      # virions per infected cell

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"model parameter {f.name} must be positive, got {v}")

    @classmethod
    def from_mapping(cls, values: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown model parameters: {sorted(unknown)}")
        return replace(cls(), **{k: float(v) for k, v in values.items()})


def forward_rhs(p: ModelParams, u, eta: float) -> np.ndarray:
    u1, u2, u3, u4 = u
    infection = p.k * u1 * u4
    return np.array([
        p.s - infection - p.mu * u1 + (eta * p.alpha + p.b) * u2,
        infection - (p.mu1 + p.alpha + p.b) * u2,
        (1.0 - eta) * p.alpha * u2 - p.delta * u3,
        p.N * p.delta * u3 - p.c * u4,
    ])


def forward_jacobian(p: ModelParams, u, eta: float) -> np.ndarray:
    """Analytic d f_i / d u_j."""
    u1, _, _, u4 = u
    ku4 = p.k * u4
    ku1 = p.k * u1
    return np.array([
        [-ku4 - p.mu, eta * p.alpha + p.b, 0.0, -ku1],
        [ku4, -(p.mu1 + p.alpha + p.b), 0.0, ku1],
        [0.0, (1.0 - eta) * p.alpha, -p.delta, 0.0],
        [0.0, 0.0, p.N * p.delta, -p.c],
    ])


def adjoint_rhs(p: ModelParams, lam, u, eta: float, mismatch: float = 0.0) -> np.ndarray:
    """Time derivative of the multipliers; ``mismatch`` is (u4 - g) * z at this time."""
    l1, l2, l3, l4 = lam
    u1, _, _, u4 = u
    return np.array([
        l1 * p.k * u4 + l1 * p.mu - l2 * p.k * u4,
        l2 * (p.mu1 + p.alpha + p.b) - l1 * (eta * p.alpha + p.b) - (1.0 - eta) * p.alpha * l3,
        l3 * p.delta - l4 * p.N * p.delta,
        l4 * p.c + l1 * p.k * u1 - l2 * p.k * u1 + mismatch,
    ])


def adjoint_jacobian(p: ModelParams, u, eta: float) -> np.ndarray:
    u1, _, _, u4 = u
    ku4 = p.k * u4
    ku1 = p.k * u1
    return np.array([
        [ku4 + p.mu, -ku4, 0.0, 0.0],
        [-(eta * p.alpha + p.b), p.mu1 + p.alpha + p.b, -(1.0 - eta) * p.alpha, 0.0],
        [0.0, 0.0, p.delta, -p.N * p.delta],
        [ku1, -ku1, 0.0, p.c],
    ])


def efficacy_sensitivity(p: ModelParams, u) -> np.ndarray:
    """d f / d eta, which is (alpha u2, 0, -alpha u2, 0)."""
    a = p.alpha * u[1]
    return np.array([a, 0.0, -a, 0.0])
