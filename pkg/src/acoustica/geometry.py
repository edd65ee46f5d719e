"""Computational domain layout and structured mesh/grid construction.

The domain is an axis-aligned rectangle split into an outer finite-difference
frame and an inner triangulated rectangle. The triangulated part is further
partitioned into a buffer belt with fixed unit coefficient, a design annulus
where the coefficient is reconstructed, and an innermost shielded hole that
waves do not enter. Everything is mirror-symmetric about the vertical axis
x1 = 0, and every rectangle corner must sit on the common grid of width h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DiscretizationError, GeometryError

# Element region tags (per-triangle).
REGION_SHIELD = 0  # innermost hole; carries no elements, kept for completeness
REGION_DESIGN = 1  # annulus where the coefficient is free
REGION_BUFFER = 2  # belt between design annulus and the FD frame, coefficient 1

REGION_NAMES = {REGION_SHIELD: "shield", REGION_DESIGN: "design", REGION_BUFFER: "buffer"}

# Boundary segment tags.
TAG_TOP = "top"          # outer top edge: plane-wave flux, then absorbing
TAG_BOTTOM = "bottom"    # outer bottom edge: absorbing outflow
TAG_SIDES = "sides"      # outer left/right edges: rigid walls (zero flux)
TAG_SHIELD = "shield"    # wall of the shielded hole (zero flux)
TAG_INTERFACE = "interface"  # FE/FD exchange ring, not a physical boundary

_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x1min, x1max] x [x2min, x2max]."""

    x1min: float
    x1max: float
    x2min: float
    x2max: float

    def __post_init__(self):
        if not (self.x1min < self.x1max and self.x2min < self.x2max):
            raise GeometryError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1max - self.x1min

    @property
    def height(self) -> float:
        return self.x2max - self.x2min

    @property
    def area(self) -> float:
        return self.width * self.height

    def strictly_inside(self, other: "Rect") -> bool:
        """True if self is contained in other with positive clearance on all sides."""
        return (
            other.x1min < self.x1min
            and self.x1max < other.x1max
            and other.x2min < self.x2min
            and self.x2max < other.x2max
        )

    def mirror_symmetric(self) -> bool:
        return abs(self.x1min + self.x1max) <= _SNAP_TOL * max(1.0, self.width)


@dataclass(frozen=True)
class IndexRect:
    """Rectangle expressed in grid node indices: nodes i0..i1, j0..j1 inclusive."""

    i0: int
    i1: int
    j0: int
    j1: int

    def contains_cell(self, i: int, j: int) -> bool:
        return self.i0 <= i < self.i1 and self.j0 <= j < self.j1

    def cell_mask(self, nx: int, ny: int) -> np.ndarray:
        """Boolean (ny, nx) mask of cells inside the rectangle; cell (i, j) spans
        nodes i..i+1, j..j+1."""
        m = np.zeros((ny, nx), dtype=bool)
        m[self.j0 : self.j1, self.i0 : self.i1] = True
        return m


@dataclass(frozen=True)
class DomainGeometry:
    """Nested rectangles of the computational domain.

    outer  - full rectangle; the strip outside `fem` is the FD frame
    fem    - triangulated rectangle
    design - outer boundary of the design annulus
    shield - innermost hole (rigid wall, no elements inside)
    """

    outer: Rect
    fem: Rect
    design: Rect
    shield: Rect
    boundary_tags: dict = field(
        default_factory=lambda: {
            "outer_top": TAG_TOP,
            "outer_bottom": TAG_BOTTOM,
            "outer_left": TAG_SIDES,
            "outer_right": TAG_SIDES,
            "shield_wall": TAG_SHIELD,
        }
    )

    def validate(self) -> None:
        if not self.fem.strictly_inside(self.outer):
            raise GeometryError("fem rectangle must be strictly inside the outer rectangle")
        if not self.design.strictly_inside(self.fem):
            raise GeometryError("design rectangle must be strictly inside the fem rectangle")
        if not self.shield.strictly_inside(self.design):
            raise GeometryError("shield rectangle must be strictly inside the design rectangle")
        for name, rect in (("outer", self.outer), ("fem", self.fem),
                           ("design", self.design), ("shield", self.shield)):
            if not rect.mirror_symmetric():
                raise GeometryError(f"{name} rectangle is not mirror-symmetric about x1 = 0")


def _snap_index(value: float, origin: float, h: float, what: str) -> int:
    """Nearest grid index of a coordinate; error if not on the grid."""
    raw = (value - origin) / h
    idx = int(round(raw))
    if abs(raw - idx) > _SNAP_TOL * max(1.0, abs(raw)):
        raise DiscretizationError(
            f"{what}={value} is not commensurate with grid width h={h}"
        )
    return idx


def grid_axes(outer: Rect, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinate axes of the global grid.

    The x-axis is generated symmetrically about 0 so mirrored nodes have
    bit-exact negated coordinates.
    """
    nx = _snap_index(outer.x1max, outer.x1min, h, "outer width")
    ny = _snap_index(outer.x2max, outer.x2min, h, "outer height")
    ic = _snap_index(0.0, outer.x1min, h, "x1 = 0 line")
    if ic <= 0 or ic >= nx:
        raise GeometryError("x1 = 0 must be an interior grid line")
    x_axis = (np.arange(nx + 1, dtype=np.int64) - ic) * h
    y_axis = outer.x2min + np.arange(ny + 1, dtype=np.int64) * h
    return x_axis, y_axis


def index_rect(rect: Rect, outer: Rect, h: float, what: str) -> IndexRect:
    return IndexRect(
        _snap_index(rect.x1min, outer.x1min, h, f"{what}.x1min"),
        _snap_index(rect.x1max, outer.x1min, h, f"{what}.x1max"),
        _snap_index(rect.x2min, outer.x2min, h, f"{what}.x2min"),
        _snap_index(rect.x2max, outer.x2min, h, f"{what}.x2max"),
    )


def cell_splits_up_right(i: int, ic: int) -> bool:
    """Diagonal orientation of cell column i (ic = index of the x1 = 0 line).

    Cells left of center use the SW-NE diagonal; right of center the mirrored
    NW-SE diagonal, which makes the triangulation mirror-symmetric exactly.
    """
    return i < ic


def triangulate_cells(
    x_axis: np.ndarray,
    y_axis: np.ndarray,
    cell_mask: np.ndarray,
    ic: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triangulate the masked cells of a structured grid.

    Returns (vertices, triangles, cell_of_triangle). Vertices are ordered
    lexicographically by (x2, x1); triangles are CCW, two per cell, cells
    visited row-major. cell_of_triangle holds flat cell indices j * nx + i.
    """
    ny, nx = cell_mask.shape
    node_used = np.zeros((ny + 1, nx + 1), dtype=bool)
    cj, ci = np.nonzero(cell_mask)
    for dj in (0, 1):
        for di in (0, 1):
            node_used[cj + dj, ci + di] = True

    node_id = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    jj, ii = np.nonzero(node_used)  # row-major: sorted by (j, i) = (x2, x1)
    node_id[jj, ii] = np.arange(len(jj))
    vertices = np.column_stack([x_axis[ii], y_axis[jj]])

    triangles = []
    cells = []
    for j, i in zip(cj, ci):
        sw = node_id[j, i]
        se = node_id[j, i + 1]
        ne = node_id[j + 1, i + 1]
        nw = node_id[j + 1, i]
        if cell_splits_up_right(i, ic):
            triangles.append((sw, se, ne))
            triangles.append((sw, ne, nw))
        else:
            triangles.append((sw, se, nw))
            triangles.append((se, ne, nw))
        cells.extend((j * nx + i, j * nx + i))
    return vertices, np.asarray(triangles, dtype=np.int64), np.asarray(cells, dtype=np.int64)


def triangulate_rectangle(rect: Rect, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Structured diagonal-split triangulation of a single rectangle.

    Exposed mainly for tests of the split pattern; the full domain build goes
    through build_geometry.
    """
    nx = _snap_index(rect.x1max, rect.x1min, h, "width")
    ny = _snap_index(rect.x2max, rect.x2min, h, "height")
    x_axis = rect.x1min + np.arange(nx + 1) * h
    y_axis = rect.x2min + np.arange(ny + 1) * h
    ic = nx // 2
    mask = np.ones((ny, nx), dtype=bool)
    verts, tris, _ = triangulate_cells(x_axis, y_axis, mask, ic)
    return verts, tris


def build_geometry(domain: DomainGeometry, h: float, include_shield: bool = True):
    """Construct the triangle mesh and FD grid for a domain layout.

    Returns (domain, TriMesh, FDGrid). Boundary vertices of the mesh on the
    fem rectangle coincide bit-exactly with FD grid nodes because both are
    generated from the same axis arrays.

    With include_shield=False the fem rectangle is meshed without the
    shielded hole (used to produce free-propagation reference data); region
    tags are assigned the same way in both variants.
    """
    from .grid import FDGrid
    from .mesh import TriMesh

    domain.validate()
    x_axis, y_axis = grid_axes(domain.outer, h)
    nx, ny = len(x_axis) - 1, len(y_axis) - 1
    ic = _snap_index(0.0, domain.outer.x1min, h, "x1 = 0 line")

    fem = index_rect(domain.fem, domain.outer, h, "fem")
    design = index_rect(domain.design, domain.outer, h, "design")
    shield = index_rect(domain.shield, domain.outer, h, "shield")

    if fem.i1 - fem.i0 < 4 or fem.j1 - fem.j0 < 4:
        raise GeometryError("fem rectangle must span at least 4 cells in each direction")
    # The exchange ring occupies one cell inside the fem boundary; refinement
    # closure may spill one cell outside the design annulus. Keep them apart.
    gap = min(design.i0 - fem.i0, fem.i1 - design.i1, design.j0 - fem.j0, fem.j1 - design.j1)
    if gap < 2:
        raise GeometryError(
            "need at least 2 cells between the design and fem rectangles "
            f"(got {gap} at h={h})"
        )

    # FE cells: inside fem, outside shield. Region by design-annulus membership.
    in_fem = fem.cell_mask(nx, ny)
    in_shield = shield.cell_mask(nx, ny)
    in_design = design.cell_mask(nx, ny)
    fe_cells = in_fem & ~in_shield if include_shield else in_fem

    verts, tris, cell_of = triangulate_cells(x_axis, y_axis, fe_cells, ic)
    cell_design = in_design.ravel()[cell_of]
    region = np.where(cell_design, REGION_DESIGN, REGION_BUFFER).astype(np.int8)

    mesh = TriMesh(
        vertices=verts,
        triangles=tris,
        element_region=region,
        refinement_level=0,
        parent_map=None,
        geometry=domain,
        h0=h,
    )
    mesh.tag_boundaries()

    grid = FDGrid.build(domain, h, x_axis, y_axis, fem)
    _check_interface_match(mesh, grid)
    return domain, mesh, grid


def _check_interface_match(mesh, grid) -> None:
    """Every FD interface node must coincide bit-exactly with one FE vertex."""
    fe_xy = {(v[0], v[1]) for v in mesh.vertices[mesh.interface_vertices]}
    outer_xy = {(p[0], p[1]) for p in grid.node_coords(grid.interface_outer)}
    if fe_xy != outer_xy:
        raise GeometryError("FE boundary vertices do not match FD interface nodes")
