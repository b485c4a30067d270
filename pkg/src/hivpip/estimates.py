"""A posteriori error indicators for the Tikhonov functional and its minimizer.

The constants in the bounds are not computable in practice.  Defaults of one
make the numbers useful as relative refinement indicators only; reports mark
them as nominal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import TimeMesh, l2_norm_cells


@dataclass(frozen=True)
class EstimateConstants:
    CI_times_C: float = 1.0
    D: float = 1.0
    CI: float = 1.0

    def __post_init__(self):
        for name in ("CI_times_C", "D", "CI"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def nominal(self) -> bool:
        return self == EstimateConstants()


def _tau_eta_norm(eta, mesh: TimeMesh) -> float:
    return l2_norm_cells(mesh, mesh.widths * mesh.check_cells(eta, "eta"))


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def functional_error_bound(Jprime, eta, mesh: TimeMesh, CI_times_C: float = 1.0) -> float:
    """C_I C ||J'(eta)|| ||tau eta||."""
    if not CI_times_C > 0:
        raise ValueError("CI_times_C must be positive")
    return CI_times_C * l2_norm_cells(mesh, mesh.check_cells(Jprime, "J'")) * _tau_eta_norm(eta, mesh)


def minimizer_bound_lipschitz(eta, mesh: TimeMesh, D: float = 1.0, CI: float = 1.0, gamma: float = 1.0) -> float:
    """(D / gamma) C_I ||tau eta||."""
    _check_gamma(gamma)
    if not (D > 0 and CI > 0):
        raise ValueError("D and CI must be positive")
    return D / gamma * CI * _tau_eta_norm(eta, mesh)


def minimizer_bound_residual(R, eta, mesh: TimeMesh, CI: float = 1.0, gamma: float = 1.0) -> float:
    """sqrt(||R|| / gamma * C_I * ||tau eta||)."""
    _check_gamma(gamma)
    if not CI > 0:
        raise ValueError("CI must be positive")
    r = l2_norm_cells(mesh, mesh.check_cells(R, "R"))
    return math.sqrt(r / gamma * CI * _tau_eta_norm(eta, mesh))


@dataclass(frozen=True)
class EstimateReport:
    functional_bound: float
    minimizer_bound_lipschitz: float
    minimizer_bound_residual: float
    constants_used: EstimateConstants = field(default_factory=EstimateConstants)

    @classmethod
    def for_level(cls, level, gamma: float, constants: EstimateConstants = EstimateConstants()) -> "EstimateReport":
        """Bounds for one ACGA level; the residual doubles as J'."""
        mesh, eta, R = level.mesh, level.eta, level.residual
        return cls(
            functional_error_bound(R, eta, mesh, constants.CI_times_C),
            minimizer_bound_lipschitz(eta, mesh, constants.D, constants.CI, gamma),
            minimizer_bound_residual(R, eta, mesh, constants.CI, gamma),
            constants,
        )


LEVEL_CSV_HEADER = (
    "level,n_cells,residual_norm,cg_iterations,stop_reason,e_eta,"
    "functional_bound,minimizer_bound_lipschitz,minimizer_bound_residual,nominal_constants"
)


def write_level_csv(path, report, gamma: float, constants: EstimateConstants = EstimateConstants()) -> list:
    """Per-level summary of a refinement report with the estimate columns appended."""
    rows = []
    with open(path, "w") as fh:
        fh.write(LEVEL_CSV_HEADER + "\n")
        for lv in report.levels:
            est = EstimateReport.for_level(lv, gamma, constants)
            rows.append(est)
            err = "" if lv.relative_error is None else repr(float(lv.relative_error))
            cols = (
                str(lv.level), str(lv.n_cells), repr(float(lv.residual_norm)), str(lv.cg_iterations),
                lv.stop_reason, err, repr(est.functional_bound), repr(est.minimizer_bound_lipschitz),
                repr(est.minimizer_bound_residual), str(constants.nominal).lower(),
            )
            fh.write(",".join(cols) + "\n")
    return rows


def residual_bounds(report, gamma: float, CI: float = 1.0) -> np.ndarray:
    """Residual-based minimizer bound for every level of a refinement report."""
    return np.array([minimizer_bound_residual(lv.residual, lv.eta, lv.mesh, CI, gamma) for lv in report.levels])
