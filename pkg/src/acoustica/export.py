"""Deterministic artifact writers: legacy ASCII VTK, CSV, manifest.

All numeric output uses shortest round-trip float formatting and no
timestamps, so re-running an experiment reproduces files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np


def _fmt(x) -> str:
    return repr(float(x))


def _lex_order(points: np.ndarray) -> np.ndarray:
    """Permutation sorting points lexicographically by (x2, x1)."""
    return np.lexsort((points[:, 0], points[:, 1]))


def write_unstructured_vtk(
    path: str,
    points: np.ndarray,
    cell_blocks: list[tuple[np.ndarray, int]],
    title: str = "acoustica output",
    point_data: dict | None = None,
    cell_data: dict | None = None,
) -> None:
    """Legacy ASCII unstructured-grid writer.

    cell_blocks is a list of (connectivity, vtk_cell_type) pairs, e.g.
    [(triangles, 5)] or [(triangles, 5), (quads, 9)]. Points are written in
    lexicographic (x2, x1) order; connectivity is remapped accordingly.
    """
    order = _lex_order(points)
    rank = np.empty(len(points), dtype=np.int64)
    rank[order] = np.arange(len(points))

    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    for p in points[order]:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} 0.0")

    n_cells = sum(len(c) for c, _ in cell_blocks)
    n_ints = sum(len(c) * (c.shape[1] + 1) for c, _ in cell_blocks)
    lines.append(f"CELLS {n_cells} {n_ints}")
    for conn, _ in cell_blocks:
        mapped = rank[conn]
        for row in mapped:
            lines.append(str(len(row)) + " " + " ".join(str(int(v)) for v in row))
    lines.append(f"CELL_TYPES {n_cells}")
    for conn, ctype in cell_blocks:
        lines.extend([str(ctype)] * len(conn))

    if cell_data:
        lines.append(f"CELL_DATA {n_cells}")
        for name, values in cell_data.items():
            lines.append(f"SCALARS {name} double")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    if point_data:
        lines.append(f"POINT_DATA {len(points)}")
        for name, values in point_data.items():
            values = np.asarray(values)
            lines.append(f"SCALARS {name} double")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values[order])

    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_mesh_vtk(path: str, mesh, cell_data: dict | None = None,
                   title: str = "triangle mesh") -> None:
    write_unstructured_vtk(path, mesh.vertices, [(mesh.triangles, 5)],
                           title=title, cell_data=cell_data)


def frame_quads(grid, fd_union: np.ndarray) -> np.ndarray:
    """Union-node connectivity of the FD frame cells (outside the fem rect)."""
    nx1 = grid.nx + 1
    quads = []
    for j in range(grid.ny):
        for i in range(grid.nx):
            if grid.hole.contains_cell(i, j):
                continue
            corners = (j * nx1 + i, j * nx1 + i + 1,
                       (j + 1) * nx1 + i + 1, (j + 1) * nx1 + i)
            quads.append(tuple(fd_union[grid.compact_of_flat[c]] for c in corners))
    return np.asarray(quads, dtype=np.int64)


def write_union_vtk(path: str, system, point_data: dict,
                    title: str = "hybrid field") -> None:
    """Write a union-node field over FE triangles plus FD frame quads."""
    quads = frame_quads(system.grid, system.fd_to_union)
    write_unstructured_vtk(
        path,
        system.union_coords,
        [(system.mesh.triangles, 5), (quads, 9)],
        title=title,
        point_data=point_data,
    )


def write_trace_csv(path: str, trace) -> None:
    """Observation trace as rows t,node_x1,node_x2,u (step-major order)."""
    times = trace.tg.times()
    with open(path, "w") as f:
        f.write("t,node_x1,node_x2,u\n")
        for n, t in enumerate(times):
            row = trace.data[n]
            ts = _fmt(t)
            for (x1, x2), u in zip(trace.coords, row):
                f.write(f"{ts},{_fmt(x1)},{_fmt(x2)},{_fmt(u)}\n")


def read_trace_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a trace CSV back as (times, coords, data)."""
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    times, idx = np.unique(raw[:, 0], return_index=True)
    n_nodes = len(raw) // len(times)
    coords = raw[:n_nodes, 1:3]
    data = raw[:, 3].reshape(len(times), n_nodes)
    return times, coords, data


def write_iteration_csv(path: str, rows: list[dict]) -> None:
    cols = ("level", "m", "gamma", "alpha", "grad_norm", "functional")
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(
                str(r[c]) if c in ("level", "m") else _fmt(r[c]) for c in cols
            ) + "\n")


class Manifest:
    """Collects produced files and writes a JSON-lines manifest with hashes."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.entries: list[dict] = []

    def add(self, path: str) -> None:
        with open(path, "rb") as f:
            blob = f.read()
        self.entries.append({
            "path": os.path.relpath(path, self.out_dir).replace(os.sep, "/"),
            "sha256": hashlib.sha256(blob).hexdigest(),
            "bytes": len(blob),
        })

    def write(self, name: str = "manifest.jsonl") -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as f:
            for e in sorted(self.entries, key=lambda e: e["path"]):
                f.write(json.dumps(e, sort_keys=True) + "\n")
        return path
