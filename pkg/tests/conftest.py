import numpy as np
import pytest

from acoustica import DomainGeometry, Rect, build_geometry


def paper_layout() -> DomainGeometry:
    return DomainGeometry(
        outer=Rect(-1.1, 1.1, -0.62, 0.62),
        fem=Rect(-1.0, 1.0, -0.52, 0.52),
        design=Rect(-0.8, 0.8, -0.4, 0.4),
        shield=Rect(-0.6, 0.6, -0.2, 0.2),
    )


def coarse_layout() -> DomainGeometry:
    """Variant with extents commensurate with h = 0.1 for cheap tests."""
    return DomainGeometry(
        outer=Rect(-1.1, 1.1, -0.6, 0.6),
        fem=Rect(-1.0, 1.0, -0.5, 0.5),
        design=Rect(-0.7, 0.7, -0.3, 0.3),
        shield=Rect(-0.4, 0.4, -0.1, 0.1),
    )


def refine_layout() -> DomainGeometry:
    """Variant commensurate with h in {0.04, 0.02, 0.01}."""
    return DomainGeometry(
        outer=Rect(-1.08, 1.08, -0.6, 0.6),
        fem=Rect(-1.0, 1.0, -0.52, 0.52),
        design=Rect(-0.8, 0.8, -0.4, 0.4),
        shield=Rect(-0.6, 0.6, -0.2, 0.2),
    )


@pytest.fixture(scope="session")
def coarse_built():
    return build_geometry(coarse_layout(), 0.1)


@pytest.fixture(scope="session")
def paper_built():
    return build_geometry(paper_layout(), 0.02)


def center_column_ids(coords: np.ndarray, ys) -> list:
    out = []
    for y in ys:
        idx = np.where((np.abs(coords[:, 0]) < 1e-12) & (np.abs(coords[:, 1] - y) < 1e-12))[0]
        assert len(idx) == 1, f"no unique node at (0, {y})"
        out.append(int(idx[0]))
    return out
