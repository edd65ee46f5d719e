"""Triangle mesh, symmetric local refinement, and element coefficient fields.

Refinement splits every design-region triangle into four congruent children
(midpoint refinement). Hanging nodes left on neighbouring triangles are
removed by longest-edge bisection, which on these structured right-isosceles
meshes reproduces the same similarity class, so mesh quality never degrades
no matter how often the design region is refined.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .errors import LineageError, RefinementError
from .geometry import (
    REGION_DESIGN,
    TAG_INTERFACE,
    TAG_SHIELD,
    DomainGeometry,
    Rect,
)

_COORD_DECIMALS = 12


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _rows_as_keys(arr: np.ndarray) -> np.ndarray:
    """View float rows as opaque fixed-size records for exact set matching."""
    a = np.ascontiguousarray(np.round(arr, _COORD_DECIMALS)) + 0.0  # -0.0 -> 0.0
    return a.view([("", a.dtype)] * a.shape[1]).ravel()


def _on_rect_perimeter(points: np.ndarray, rect: Rect, tol: float) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    on_v = (np.abs(x - rect.x1min) <= tol) | (np.abs(x - rect.x1max) <= tol)
    on_h = (np.abs(y - rect.x2min) <= tol) | (np.abs(y - rect.x2max) <= tol)
    in_x = (x >= rect.x1min - tol) & (x <= rect.x1max + tol)
    in_y = (y >= rect.x2min - tol) & (y <= rect.x2max + tol)
    return ((on_v & in_y) | (on_h & in_x)) & in_x & in_y


@dataclass
class TriMesh:
    """Conforming triangle mesh of the fem rectangle minus the shielded hole."""

    vertices: np.ndarray  # (n, 2) float64
    triangles: np.ndarray  # (m, 3) int64, counter-clockwise
    element_region: np.ndarray  # (m,) int8
    refinement_level: int = 0
    parent_map: np.ndarray | None = None  # parent index one level down; None at level 0
    geometry: DomainGeometry | None = None
    h0: float = 0.0  # grid width of the level-0 structured mesh
    min_angle_threshold: float = 20.0  # degrees
    boundary_edges: dict = field(default_factory=dict)
    interface_vertices: np.ndarray | None = None
    shield_vertices: np.ndarray | None = None

    # -- basic measures ----------------------------------------------------

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def total_area(self) -> float:
        return float(self.areas().sum())

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        """(m, 3) lengths of edges (v0v1, v1v2, v2v0)."""
        p = self.vertices[self.triangles]
        d = p[:, [1, 2, 0], :] - p
        return np.sqrt((d * d).sum(axis=2))

    def diameters(self) -> np.ndarray:
        return self.edge_lengths().max(axis=1)

    def min_diameter(self) -> float:
        return float(self.diameters().min())

    def min_angle_deg(self) -> float:
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a, b, c = p[:, k], p[:, (k + 1) % 3], p[:, (k + 2) % 3]
            u, v = b - a, c - a
            cosang = (u * v).sum(1) / np.sqrt((u * u).sum(1) * (v * v).sum(1))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.degrees(np.min(angles)))

    # -- connectivity ------------------------------------------------------

    def unique_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(edges (E, 2) with v0 < v1, counts (E,)) over all triangle edges."""
        e = np.concatenate(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        e.sort(axis=1)
        edges, counts = np.unique(e, axis=0, return_counts=True)
        return edges, counts

    def edge_to_triangles(self) -> dict:
        d = defaultdict(list)
        for t, (a, b, c) in enumerate(self.triangles):
            d[_edge_key(a, b)].append(t)
            d[_edge_key(b, c)].append(t)
            d[_edge_key(c, a)].append(t)
        return d

    def tag_boundaries(self) -> None:
        """Classify boundary edges as exchange interface or shield wall."""
        if self.geometry is None:
            return
        edges, counts = self.unique_edges()
        bnd = edges[counts == 1]
        tol = 1e-9 * max(1.0, self.geometry.outer.width)
        mids = 0.5 * (self.vertices[bnd[:, 0]] + self.vertices[bnd[:, 1]])
        on_shield = _on_rect_perimeter(mids, self.geometry.shield, tol)
        on_fem = _on_rect_perimeter(mids, self.geometry.fem, tol)
        if not np.all(on_shield | on_fem):
            raise RefinementError("mesh has boundary edges off the fem and shield rectangles")
        self.boundary_edges = {
            TAG_SHIELD: bnd[on_shield],
            TAG_INTERFACE: bnd[on_fem],
        }
        self.interface_vertices = np.unique(bnd[on_fem])
        self.shield_vertices = np.unique(bnd[on_shield])

    # -- symmetry ----------------------------------------------------------

    def mirror_vertex_map(self) -> np.ndarray | None:
        """Index of the mirror partner of each vertex, or None if asymmetric."""
        keys = _rows_as_keys(self.vertices)
        mirrored = self.vertices.copy()
        mirrored[:, 0] = -mirrored[:, 0]
        mkeys = _rows_as_keys(mirrored)
        order = np.argsort(keys)
        pos = np.searchsorted(keys[order], mkeys)
        pos = np.clip(pos, 0, len(keys) - 1)
        cand = order[pos]
        ok = keys[cand] == mkeys
        if not np.all(ok):
            return None
        return cand

    def is_mirror_symmetric(self) -> bool:
        mirror = self.mirror_vertex_map()
        if mirror is None:
            return False
        tri_sorted = np.sort(self.triangles, axis=1)
        mirrored = np.sort(mirror[self.triangles], axis=1)
        have = set(map(tuple, tri_sorted.tolist()))
        return all(tuple(t) in have for t in mirrored.tolist())


# -- refinement -------------------------------------------------------------


def red_split_elements(mesh: TriMesh, marked: np.ndarray) -> TriMesh:
    """Split the marked triangles into four children each, no closure.

    Intended for uniform patches (all-marked meshes) and for testing the
    split rule; general refinement goes through refine_symmetric.
    """
    return _refine(mesh, np.asarray(marked, dtype=np.int64), closure=False)


def refine_symmetric(mesh: TriMesh, region: int = REGION_DESIGN) -> TriMesh:
    """Refine every triangle of a region, restoring conformity by bisection.

    The result has no hanging nodes, satisfies the minimal-angle bound, and
    is mirror-symmetric whenever the input is.
    """
    marked = np.flatnonzero(mesh.element_region == region)
    if marked.size == 0:
        raise RefinementError(f"no elements carry region tag {region}")
    return _refine(mesh, marked, closure=True)


def _refine(mesh: TriMesh, marked: np.ndarray, closure: bool) -> TriMesh:
    n0 = len(mesh.vertices)
    old = mesh.vertices
    new_pts: list[tuple[float, float]] = []
    midpoint: dict[tuple[int, int], int] = {}

    def point(v: int):
        return old[v] if v < n0 else new_pts[v - n0]

    def mid_id(a: int, b: int) -> int:
        k = _edge_key(a, b)
        vid = midpoint.get(k)
        if vid is None:
            pa, pb = point(a), point(b)
            new_pts.append(((pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5))
            vid = n0 + len(new_pts) - 1
            midpoint[k] = vid
        return vid

    tri_v: list[tuple[int, int, int]] = [tuple(t) for t in mesh.triangles.tolist()]
    tri_region: list[int] = mesh.element_region.tolist()
    tri_parent: list[int] = list(range(len(tri_v)))
    alive: list[bool] = [True] * len(tri_v)

    edge_tris: dict[tuple[int, int], set] = defaultdict(set)
    for t, (a, b, c) in enumerate(tri_v):
        edge_tris[_edge_key(a, b)].add(t)
        edge_tris[_edge_key(b, c)].add(t)
        edge_tris[_edge_key(c, a)].add(t)

    def kill(t: int) -> None:
        alive[t] = False
        a, b, c = tri_v[t]
        edge_tris[_edge_key(a, b)].discard(t)
        edge_tris[_edge_key(b, c)].discard(t)
        edge_tris[_edge_key(c, a)].discard(t)

    def add_tri(vs, region_, parent_) -> int:
        tri_v.append(vs)
        tri_region.append(region_)
        tri_parent.append(parent_)
        alive.append(True)
        t = len(tri_v) - 1
        a, b, c = vs
        edge_tris[_edge_key(a, b)].add(t)
        edge_tris[_edge_key(b, c)].add(t)
        edge_tris[_edge_key(c, a)].add(t)
        return t

    for t in marked.tolist():
        a, b, c = tri_v[t]
        mab, mbc, mca = mid_id(a, b), mid_id(b, c), mid_id(c, a)
        reg, par = tri_region[t], tri_parent[t]
        kill(t)
        add_tri((a, mab, mca), reg, par)
        add_tri((b, mbc, mab), reg, par)
        add_tri((c, mca, mbc), reg, par)
        add_tri((mab, mbc, mca), reg, par)

    if closure:
        seeds = sorted({t for k in midpoint for t in edge_tris[k] if alive[t]})
        work = deque(seeds)
        budget = 60 * (len(tri_v) + 1)
        while work:
            budget -= 1
            if budget < 0:
                raise RefinementError("conforming closure did not terminate")
            t = work.popleft()
            if not alive[t]:
                continue
            a, b, c = tri_v[t]
            cyc = ((a, b), (b, c), (c, a))
            if not any(_edge_key(*e) in midpoint for e in cyc):
                continue
            # Longest edge, ties broken by a mirror-invariant coordinate key.
            best = None
            for loc, (u, v) in enumerate(cyc):
                pu, pv = point(u), point(v)
                dx, dy = pu[0] - pv[0], pu[1] - pv[1]
                key = (
                    dx * dx + dy * dy,
                    round((pu[1] + pv[1]) * 0.5, _COORD_DECIMALS),
                    round(abs((pu[0] + pv[0]) * 0.5), _COORD_DECIMALS),
                )
                if best is None or key > best[0]:
                    best = (key, loc)
            loc = best[1]
            u, v = cyc[loc]
            w = tri_v[t][(loc + 2) % 3]
            k = _edge_key(u, v)
            if k not in midpoint:
                m = mid_id(u, v)
                for s in list(edge_tris[k]):
                    if s != t and alive[s]:
                        work.append(s)
            m = midpoint[k]
            reg, par = tri_region[t], tri_parent[t]
            kill(t)
            work.append(add_tri((u, m, w), reg, par))
            work.append(add_tri((m, v, w), reg, par))

    keep = [t for t in range(len(tri_v)) if alive[t]]
    vertices = np.vstack([old, np.asarray(new_pts, dtype=np.float64).reshape(-1, 2)])
    refined = TriMesh(
        vertices=vertices,
        triangles=np.asarray([tri_v[t] for t in keep], dtype=np.int64),
        element_region=np.asarray([tri_region[t] for t in keep], dtype=np.int8),
        refinement_level=mesh.refinement_level + 1,
        parent_map=np.asarray([tri_parent[t] for t in keep], dtype=np.int64),
        geometry=mesh.geometry,
        h0=mesh.h0,
        min_angle_threshold=mesh.min_angle_threshold,
    )
    angle = refined.min_angle_deg()
    if angle < mesh.min_angle_threshold - 1e-9:
        raise RefinementError(
            f"refinement would reduce the minimal angle to {angle:.2f} deg "
            f"(bound {mesh.min_angle_threshold} deg)"
        )
    if mesh.interface_vertices is not None and closure:
        touched = {v for t in np.flatnonzero(~np.asarray(alive[: len(mesh.triangles)]))
                   for v in mesh.triangles[t]}
        if touched & set(mesh.interface_vertices.tolist()):
            raise RefinementError("refinement closure reached the FE/FD exchange band")
    refined.tag_boundaries()
    return refined


# -- coefficient fields ------------------------------------------------------


@dataclass
class CoefficientField:
    """Piecewise-constant coefficient: one value per triangle, 1 off-design.

    The admissible interval is [lower, upper]; updates are clamped to it and
    values outside the design region are pinned to 1.
    """

    mesh: TriMesh
    values: np.ndarray
    lower: float = 1.0
    upper: float = np.inf

    @classmethod
    def constant(cls, mesh: TriMesh, design_value: float,
                 lower: float = 1.0, upper: float | None = None) -> "CoefficientField":
        if upper is None:
            upper = max(design_value, 1.0)
        values = np.ones(len(mesh.triangles))
        values[mesh.element_region == REGION_DESIGN] = design_value
        f = cls(mesh, values, lower, upper)
        f.clamp()
        return f

    @property
    def design_mask(self) -> np.ndarray:
        return self.mesh.element_region == REGION_DESIGN

    def clamp(self) -> None:
        np.clip(self.values, self.lower, self.upper, out=self.values)
        self.values[~self.design_mask] = 1.0

    def copy(self) -> "CoefficientField":
        return CoefficientField(self.mesh, self.values.copy(), self.lower, self.upper)

    def validate(self) -> None:
        if len(self.values) != len(self.mesh.triangles):
            raise LineageError("coefficient length does not match element count")
        if np.any(self.values < self.lower - 1e-12) or np.any(self.values > self.upper + 1e-12):
            raise ValueError("coefficient violates admissible bounds")
        off = ~self.design_mask
        if not np.allclose(self.values[off], 1.0, atol=1e-12):
            raise ValueError("coefficient must equal 1 outside the design region")


def interpolate_coefficient(field: CoefficientField, fine: TriMesh) -> CoefficientField:
    """Carry a coefficient from a coarse mesh onto its refinement.

    Each design child averages its parent's value with the values of parent
    edge-neighbours that share the child's vertices created on parent edges;
    children with no such vertices inherit the parent value exactly. Only
    design-region neighbours enter the average (the coefficient is fixed at 1
    elsewhere and must not bleed in), so the rule is a convex combination of
    design values: constants on the design region are preserved exactly and
    bounds are respected.
    """
    coarse = field.mesh
    if fine.parent_map is None:
        raise LineageError("fine mesh has no parent map")
    if len(fine.parent_map) != len(fine.triangles):
        raise LineageError("parent map length mismatch")
    if fine.parent_map.max() >= len(coarse.triangles) or fine.parent_map.min() < 0:
        raise LineageError("parent map refers to elements outside the coarse mesh")

    n_coarse = len(coarse.vertices)
    edge_tris = coarse.edge_to_triangles()
    cverts = coarse.vertices
    ctris = coarse.triangles
    scale = max(1.0, float(np.abs(cverts).max()))
    tol = 1e-12 * scale

    out = np.ones(len(fine.triangles))
    design = fine.element_region == REGION_DESIGN
    for f in np.flatnonzero(design):
        p = int(fine.parent_map[f])
        vals = [field.values[p]]
        neighbors: set[int] = set()
        for vid in fine.triangles[f]:
            if vid < n_coarse:
                continue  # parent corner, never an off-parent vertex
            w = fine.vertices[vid]
            pa, pb, pc = ctris[p]
            for a, b in ((pa, pb), (pb, pc), (pc, pa)):
                va, vb = cverts[a], cverts[b]
                ex, ey = vb[0] - va[0], vb[1] - va[1]
                wx, wy = w[0] - va[0], w[1] - va[1]
                if abs(ex * wy - ey * wx) > tol * max(abs(ex), abs(ey), 1e-300):
                    continue
                s = (wx * ex + wy * ey) / (ex * ex + ey * ey)
                if tol < s < 1.0 - tol:
                    for q in edge_tris[_edge_key(a, b)]:
                        if q != p and coarse.element_region[q] == REGION_DESIGN:
                            neighbors.add(q)
                    break
        vals.extend(field.values[q] for q in sorted(neighbors))
        out[f] = float(np.mean(vals))

    result = CoefficientField(fine, out, field.lower, field.upper)
    result.clamp()
    return result
