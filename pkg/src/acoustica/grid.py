"""Structured finite-difference grid with a rectangular hole for the FE mesh.

The grid covers the whole outer rectangle. Nodes strictly inside the fem
rectangle are absent except for two exchange layers: the ring on the fem
boundary itself (read by the FE side) and the ring one cell further in
(written from the FE solution each step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainGeometry, IndexRect


def _ring_nodes(i0: int, i1: int, j0: int, j1: int, nx1: int) -> np.ndarray:
    """Flat node indices on the boundary of the inclusive index rectangle,
    ordered lexicographically by (j, i)."""
    ids = []
    for j in range(j0, j1 + 1):
        if j in (j0, j1):
            ids.extend(j * nx1 + i for i in range(i0, i1 + 1))
        else:
            ids.append(j * nx1 + i0)
            ids.append(j * nx1 + i1)
    return np.asarray(sorted(ids), dtype=np.int64)


@dataclass
class FDGrid:
    """Finite-difference node bookkeeping.

    Node (i, j) sits at (x_axis[i], y_axis[j]); flat index j * (nx + 1) + i.
    `active` flags nodes that exist (frame plus the two exchange rings).
    Compact arrays over active nodes are what the solver works with.
    """

    origin: tuple[float, float]
    h: float
    nx: int  # cell counts
    ny: int
    x_axis: np.ndarray
    y_axis: np.ndarray
    hole: IndexRect  # index rectangle of the fem region
    active: np.ndarray  # (ny+1, nx+1) bool
    interface_outer: np.ndarray  # flat ids on the fem boundary ring
    interface_inner: np.ndarray  # flat ids one cell inside
    geometry: DomainGeometry
    compact_of_flat: np.ndarray = field(repr=False)  # (-1 where inactive)
    flat_of_compact: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, domain, h, x_axis, y_axis, fem: IndexRect) -> "FDGrid":
        nx, ny = len(x_axis) - 1, len(y_axis) - 1
        nx1 = nx + 1
        active = np.ones((ny + 1, nx1), dtype=bool)
        if fem.i1 - fem.i0 >= 4 and fem.j1 - fem.j0 >= 4:
            active[fem.j0 + 2 : fem.j1 - 1, fem.i0 + 2 : fem.i1 - 1] = False

        outer_ring = _ring_nodes(fem.i0, fem.i1, fem.j0, fem.j1, nx1)
        inner_ring = _ring_nodes(fem.i0 + 1, fem.i1 - 1, fem.j0 + 1, fem.j1 - 1, nx1)

        compact_of_flat = -np.ones((ny + 1) * nx1, dtype=np.int64)
        flat_of_compact = np.flatnonzero(active.ravel())
        compact_of_flat[flat_of_compact] = np.arange(len(flat_of_compact))

        return cls(
            origin=(float(x_axis[0]), float(y_axis[0])),
            h=h,
            nx=nx,
            ny=ny,
            x_axis=x_axis,
            y_axis=y_axis,
            hole=fem,
            active=active,
            interface_outer=outer_ring,
            interface_inner=inner_ring,
            geometry=domain,
            compact_of_flat=compact_of_flat,
            flat_of_compact=flat_of_compact,
        )

    @property
    def n_active(self) -> int:
        return len(self.flat_of_compact)

    def node_coords(self, flat_ids: np.ndarray) -> np.ndarray:
        flat_ids = np.asarray(flat_ids)
        j, i = np.divmod(flat_ids, self.nx + 1)
        return np.column_stack([self.x_axis[i], self.y_axis[j]])

    def compact(self, flat_ids: np.ndarray) -> np.ndarray:
        c = self.compact_of_flat[np.asarray(flat_ids)]
        if np.any(c < 0):
            raise IndexError("flat index refers to an inactive grid node")
        return c

    # Boundary rows of the outer rectangle, flat ids ordered by x1.
    def boundary_row(self, which: str) -> np.ndarray:
        nx1 = self.nx + 1
        if which == "top":
            return self.ny * nx1 + np.arange(nx1, dtype=np.int64)
        if which == "bottom":
            return np.arange(nx1, dtype=np.int64)
        if which == "left":
            return np.arange(1, self.ny, dtype=np.int64) * nx1
        if which == "right":
            return np.arange(1, self.ny, dtype=np.int64) * nx1 + self.nx
        raise ValueError(f"unknown boundary row {which!r}")

    def observation_nodes(self) -> np.ndarray:
        """Flat ids where traces are recorded: full top and bottom rows."""
        return np.concatenate([self.boundary_row("top"), self.boundary_row("bottom")])
