"""Uniform rectangular meshes on a bounded box with per-axis boundary handling.

Conventions
-----------
* Cell multi-indices map to flat indices with axis 0 varying fastest:
  ``flat = m[0] + n[0]*(m[1] + n[1]*m[2])``.
* Every cell has measure ``prod(h)``; every face normal points along an axis.
* Faces are enumerated once each, grouped by normal axis.  Within an axis:
  interior faces in flat order of the lower cell, then periodic wrap faces,
  then (Dirichlet axes only) boundary faces on the low side followed by the
  high side.
* Periodic axes identify opposite box faces.  Neumann axes carry no boundary
  faces at all (zero normal flux).  Dirichlet axes keep their boundary faces
  so mass can flow out of the box; nothing flows in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PERIODIC = "periodic"
NEUMANN = "neumann"
DIRICHLET = "dirichlet"

_BC_KINDS = (PERIODIC, NEUMANN, DIRICHLET)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower[i], upper[i])`` in 1 to 3 dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper):
            raise ValueError("lower and upper must have the same length")
        if not 1 <= len(lower) <= 3:
            raise ValueError(f"dimension {len(lower)} not supported (need 1..3)")
        for lo, up in zip(lower, upper):
            if not (np.isfinite(lo) and np.isfinite(up)) or not lo < up:
                raise ValueError(f"degenerate box: [{lo}, {up}]")

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))


@dataclass(frozen=True)
class Edge:
    """A single mesh face, oriented from ``cell_a`` toward ``cell_b``.

    ``cell_b`` is None for Dirichlet boundary faces (outflow-capable).
    ``normal_a`` is the sign of the outward normal of ``cell_a`` along
    ``axis``; ``measure`` is the (d-1)-dimensional face measure.
    """

    index: int
    cell_a: int
    cell_b: int | None
    axis: int
    normal_a: int
    measure: float
    midpoint: tuple[float, ...]


@dataclass(frozen=True)
class EdgeTable:
    """Struct-of-arrays view of all faces; the fast path for assembly."""

    cell_a: np.ndarray    # (ne,) int64
    cell_b: np.ndarray    # (ne,) int64, -1 marks a Dirichlet boundary face
    axis: np.ndarray      # (ne,) int64
    normal: np.ndarray    # (ne,) float64, +-1, outward from cell_a
    measure: np.ndarray   # (ne,) float64
    midpoint: np.ndarray  # (ne, d) float64

    def __len__(self) -> int:
        return int(self.cell_a.shape[0])

    @property
    def interior(self) -> np.ndarray:
        """Mask of faces shared by two cells (includes periodic wraps)."""
        return self.cell_b >= 0


class Grid:
    """Uniform axis-aligned mesh; immutable after construction.

    Attributes
    ----------
    domain : BoxDomain
    n : tuple of cells per axis (each >= 2)
    bc : tuple of boundary kinds per axis
    h : tuple of cell side lengths
    ncells : total cell count
    cell_volume : measure of every cell
    """

    def __init__(self, domain: BoxDomain, n: Sequence[int], bc: Sequence[str]):
        n = tuple(int(k) for k in n)
        bc = tuple(str(b).lower() for b in bc)
        if len(n) != domain.d:
            raise ValueError(f"n has length {len(n)}, domain has dimension {domain.d}")
        if len(bc) != domain.d:
            raise ValueError(f"bc has length {len(bc)}, domain has dimension {domain.d}")
        for k in n:
            if k < 2:
                raise ValueError(f"need at least 2 cells per axis, got {k}")
        for b in bc:
            if b not in _BC_KINDS:
                raise ValueError(f"unknown boundary kind {b!r}")
        self.domain = domain
        self.n = n
        self.bc = bc
        self.h = tuple(
            (up - lo) / k for lo, up, k in zip(domain.lower, domain.upper, n)
        )
        self.ncells = int(np.prod(n))
        self.cell_volume = float(np.prod(self.h))
        self._midpoints: np.ndarray | None = None
        self._edges = _build_edge_table(domain, n, bc, self.h)
        self._edge_list: list[Edge] | None = None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.domain == other.domain
            and self.n == other.n
            and self.bc == other.bc
        )

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, bc={self.bc}, domain=[{self.domain.lower}, {self.domain.upper}])"

    @property
    def edges(self) -> EdgeTable:
        return self._edges

    @property
    def cell_midpoints(self) -> np.ndarray:
        """(ncells, d) array of cell centers, canonical flat order."""
        if self._midpoints is None:
            multi = np.unravel_index(np.arange(self.ncells), self.n, order="F")
            mid = np.empty((self.ncells, self.domain.d))
            for i in range(self.domain.d):
                mid[:, i] = self.domain.lower[i] + (multi[i] + 0.5) * self.h[i]
            mid.flags.writeable = False
            self._midpoints = mid
        return self._midpoints

    def index_of(self, multi: Sequence[int]) -> int:
        """Flat index of a multi-index (axis 0 fastest)."""
        multi = tuple(int(m) for m in multi)
        if len(multi) != self.domain.d:
            raise ValueError("multi-index has wrong length")
        for m, k in zip(multi, self.n):
            if not 0 <= m < k:
                raise IndexError(f"multi-index {multi} out of range for n={self.n}")
        return int(np.ravel_multi_index(multi, self.n, order="F"))

    def multi_of(self, index: int) -> tuple[int, ...]:
        """Multi-index of a flat cell index."""
        if not 0 <= index < self.ncells:
            raise IndexError(f"cell index {index} out of range")
        return tuple(int(m) for m in np.unravel_index(index, self.n, order="F"))


def build_grid(domain: BoxDomain, n: Sequence[int], bc: Sequence[str]) -> Grid:
    """Construct a uniform mesh over ``domain`` with ``n[i]`` cells per axis."""
    return Grid(domain, n, bc)


def _build_edge_table(domain, n, bc, h) -> EdgeTable:
    d = domain.d
    ncells = int(np.prod(n))
    idx = np.arange(ncells)
    multi = np.unravel_index(idx, n, order="F")

    def flat(comps):
        return np.ravel_multi_index(comps, n, order="F")

    def face_mid(mask, axis, coord):
        m = np.empty((int(mask.sum()), d))
        for j in range(d):
            if j == axis:
                m[:, j] = coord
            else:
                m[:, j] = domain.lower[j] + (multi[j][mask] + 0.5) * h[j]
        return m

    cell_a, cell_b, axes, normals, measures, mids = [], [], [], [], [], []

    def emit(a, b, axis, normal, mask, coord):
        cell_a.append(a)
        cell_b.append(b)
        k = a.shape[0]
        axes.append(np.full(k, axis, dtype=np.int64))
        normals.append(np.full(k, float(normal)))
        measures.append(np.full(k, float(np.prod(h)) / h[axis]))
        mids.append(face_mid(mask, axis, coord))

    for a in range(d):
        na = n[a]
        ma = multi[a]

        inner = ma < na - 1
        comps = [multi[j][inner] for j in range(d)]
        comps[a] = comps[a] + 1
        coord = domain.lower[a] + (ma[inner] + 1) * h[a]
        emit(idx[inner], flat(comps), a, +1, inner, coord)

        if bc[a] == PERIODIC:
            wrap = ma == na - 1
            comps = [multi[j][wrap] for j in range(d)]
            comps[a] = np.zeros(int(wrap.sum()), dtype=comps[a].dtype)
            emit(idx[wrap], flat(comps), a, +1, wrap, domain.upper[a])
        elif bc[a] == DIRICHLET:
            low = ma == 0
            none = np.full(int(low.sum()), -1, dtype=np.int64)
            emit(idx[low], none, a, -1, low, domain.lower[a])
            high = ma == na - 1
            none = np.full(int(high.sum()), -1, dtype=np.int64)
            emit(idx[high], none, a, +1, high, domain.upper[a])

    table = EdgeTable(
        cell_a=np.concatenate(cell_a).astype(np.int64),
        cell_b=np.concatenate(cell_b).astype(np.int64),
        axis=np.concatenate(axes),
        normal=np.concatenate(normals),
        measure=np.concatenate(measures),
        midpoint=np.concatenate(mids, axis=0),
    )
    for arr in (table.cell_a, table.cell_b, table.axis, table.normal,
                table.measure, table.midpoint):
        arr.flags.writeable = False
    return table


def enumerate_edges(grid: Grid) -> list[Edge]:
    """All faces of the mesh as :class:`Edge` objects, one per face.

    The list is built once per grid and cached, so repeated calls (and
    :func:`neighbors`) hand out the same objects.
    """
    if grid._edge_list is None:
        t = grid.edges
        grid._edge_list = [
            Edge(
                index=i,
                cell_a=int(t.cell_a[i]),
                cell_b=int(t.cell_b[i]) if t.cell_b[i] >= 0 else None,
                axis=int(t.axis[i]),
                normal_a=int(t.normal[i]),
                measure=float(t.measure[i]),
                midpoint=tuple(float(x) for x in t.midpoint[i]),
            )
            for i in range(len(t))
        ]
    return grid._edge_list


def neighbors(grid: Grid, cell: int) -> list[tuple[int | None, Edge]]:
    """Neighbours of a cell as ``(other_cell, edge)`` pairs.

    ``other_cell`` is None across Dirichlet boundary faces.  A periodic axis
    with two cells yields the same neighbour twice, through distinct faces.
    """
    if not 0 <= cell < grid.ncells:
        raise IndexError(f"cell index {cell} out of range")
    edges = enumerate_edges(grid)
    t = grid.edges
    hits = np.nonzero((t.cell_a == cell) | (t.cell_b == cell))[0]
    out = []
    for k in hits:
        e = edges[k]
        out.append((e.cell_b, e) if e.cell_a == cell else (e.cell_a, e))
    return out
