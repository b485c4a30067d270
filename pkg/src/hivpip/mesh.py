"""Time partitions of [0, T] and transfer of fields between nested partitions.

Cell fields (one value per cell ``(t_{k-1}, t_k]``) and node fields (one value
or vector per node) are plain numpy arrays; the mesh validates their lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Immutable partition ``0 = t_0 < t_1 < ... < t_K = T``."""

    nodes: np.ndarray
    level: int = 0
    _widths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError(f"first node must be 0, got {nodes[0]}")
        widths = np.diff(nodes)
        if not np.all(widths > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        widths.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_widths", widths)

    @classmethod
    def uniform(cls, t_end: float, n_cells: int) -> "TimeMesh":
        if not t_end > 0:
            raise ValueError(f"t_end must be positive, got {t_end}")
        if int(n_cells) != n_cells or n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {n_cells}")
        return cls(np.linspace(0.0, float(t_end), int(n_cells) + 1))

    @property
    def widths(self) -> np.ndarray:
        """Cell widths tau_k."""
        return self._widths

    @property
    def n_cells(self) -> int:
        return self._widths.size

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def __len__(self) -> int:
        return self.n_cells

    def __repr__(self) -> str:
        return f"TimeMesh(n_cells={self.n_cells}, t_end={self.t_end:g}, level={self.level})"

    def same_nodes(self, other: "TimeMesh") -> bool:
        return self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)

    def mesh_function(self, t) -> np.ndarray:
        """Piecewise-constant tau(t): width of the cell containing ``t``."""
        return self._widths[self.cell_index(t)]

    def cell_index(self, t) -> np.ndarray:
        """Index of the cell ``(t_{k-1}, t_k]`` containing ``t`` (t = 0 maps to cell 0)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end):
            raise ValueError(f"time outside [0, {self.t_end}]")
        idx = np.searchsorted(self.nodes, t, side="left") - 1
        return np.clip(idx, 0, self.n_cells - 1)

    def check_cells(self, values, name: str = "cell field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_cells:
            raise ValueError(f"{name} has {values.shape[0]} entries, mesh has {self.n_cells} cells")
        return values

    def check_nodes(self, values, name: str = "node field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_nodes:
            raise ValueError(f"{name} has {values.shape[0]} entries, mesh has {self.n_nodes} nodes")
        return values

    def refine(self, marked: Iterable[int], neighbours: bool = False) -> "TimeMesh":
        """Bisect every marked cell at its midpoint.

        With ``neighbours=True`` the two cells adjacent to each marked cell
        are bisected as well.
        """
        marked = {int(k) for k in marked}
        bad = [k for k in marked if not 0 <= k < self.n_cells]
        if bad:
            raise ValueError(f"cell indices out of range: {sorted(bad)}")
        if neighbours:
            marked |= {j for k in marked for j in (k - 1, k + 1) if 0 <= j < self.n_cells}
        idx = np.array(sorted(marked), dtype=int)
        new_nodes = np.union1d(self.nodes, self.midpoints[idx]) if idx.size else self.nodes.copy()
        return TimeMesh(new_nodes, level=self.level + 1)

    def to_text(self) -> str:
        """One node time per line."""
        return "".join(f"{t!r}\n" for t in self.nodes.tolist())

    @classmethod
    def from_text(cls, text: str, level: int = 0) -> "TimeMesh":
        return cls(np.array([float(line) for line in text.split()]), level=level)


def create_uniform(t_end: float, n_cells: int) -> TimeMesh:
    return TimeMesh.uniform(t_end, n_cells)


def refine(mesh: TimeMesh, marked: Iterable[int], neighbours: bool = False) -> TimeMesh:
    return mesh.refine(marked, neighbours=neighbours)


def is_nested(parent: TimeMesh, child: TimeMesh) -> bool:
    if parent.t_end != child.t_end:
        return False
    return bool(np.all(np.isin(parent.nodes, child.nodes)))


def transfer_cell_field(src: TimeMesh, values, dst: TimeMesh) -> np.ndarray:
    """Piecewise-constant injection of a cell field onto a nested child mesh."""
    values = src.check_cells(values)
    if not is_nested(src, dst):
        raise ValueError("destination mesh does not contain every source node")
    return values[src.cell_index(dst.midpoints)].copy()


def interpolate_node_field(mesh: TimeMesh, values, t):
    """Piecewise-linear evaluation of a node field; exact at nodes.

    ``values`` may be shape (n_nodes,) or (n_nodes, m); ``t`` scalar or array.
    """
    values = mesh.check_nodes(values)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > mesh.t_end):
        raise ValueError(f"time outside [0, {mesh.t_end}]")
    if values.ndim == 1:
        return np.interp(t_arr, mesh.nodes, values)
    out = np.stack([np.interp(t_arr, mesh.nodes, values[:, j]) for j in range(values.shape[1])], axis=-1)
    return out


def cell_average(values) -> np.ndarray:
    """Cell-midpoint value of a piecewise-linear node field (mean of the two endpoints)."""
    values = np.asarray(values, dtype=float)
    return 0.5 * (values[:-1] + values[1:])


def l2_norm_cells(mesh: TimeMesh, values) -> float:
    """sqrt(sum_k tau_k v_k^2)."""
    values = mesh.check_cells(values)
    return float(np.sqrt(np.sum(mesh.widths * values * values)))


def inner_cells(mesh: TimeMesh, a, b) -> float:
    """L2 inner product of two cell fields, sum_k tau_k a_k b_k."""
    a = mesh.check_cells(a)
    b = mesh.check_cells(b)
    return float(np.sum(mesh.widths * a * b))
