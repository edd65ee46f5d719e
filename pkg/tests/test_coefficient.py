import numpy as np
import pytest

from acoustica import (
    REGION_DESIGN,
    CoefficientField,
    LineageError,
    TriMesh,
    interpolate_coefficient,
    red_split_elements,
    refine_symmetric,
)
from acoustica.geometry import Rect, triangulate_cells
from conftest import coarse_layout
from acoustica import build_geometry


def checkerboard_patch():
    """2x2 squares (eight design triangles) with the mirrored diagonal rule."""
    x_axis = -0.5 + np.arange(3) * 0.5
    y_axis = np.arange(3) * 0.5
    verts, tris, _ = triangulate_cells(x_axis, y_axis, np.ones((2, 2), dtype=bool), ic=1)
    mesh = TriMesh(
        vertices=verts,
        triangles=tris,
        element_region=np.full(len(tris), REGION_DESIGN, dtype=np.int8),
    )
    # value 2 on the lower-left and upper-right cells, 1 elsewhere
    values = np.array([2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0])
    return mesh, CoefficientField(mesh, values, lower=1.0, upper=2.0)


def test_constant_field_survives_interpolation(coarse_built):
    _, mesh, _ = coarse_built
    field = CoefficientField.constant(mesh, 2.0, upper=2.0)
    fine = refine_symmetric(mesh)
    out = interpolate_coefficient(field, fine)
    design = fine.element_region == REGION_DESIGN
    assert np.allclose(out.values[design], 2.0, atol=0.0)
    assert np.allclose(out.values[~design], 1.0, atol=0.0)


def test_interpolation_is_convex_combination():
    mesh, field = checkerboard_patch()
    # single element raised above its uniform neighbours
    field.values[:] = 1.0
    field.values[3] = 2.0
    fine = red_split_elements(mesh, np.arange(8))
    out = interpolate_coefficient(field, fine)
    children = np.flatnonzero(fine.parent_map == 3)
    assert np.all(out.values[children] >= 1.0)
    assert np.all(out.values[children] <= 2.0)
    # min/max bounds preserved globally
    assert out.values.min() >= field.values.min() - 1e-15
    assert out.values.max() <= field.values.max() + 1e-15


def test_checkerboard_matches_hand_enumeration():
    mesh, field = checkerboard_patch()
    fine = red_split_elements(mesh, np.arange(8))
    out = interpolate_coefficient(field, fine)

    # hand-computed averages: parent value with the edge-neighbour values
    # across the parent edges holding each child's new vertices
    expected_by_parent = {
        0: [2.0, 1.5, 5 / 3, 5 / 3],
        1: [2.0, 5 / 3, 1.5, 5 / 3],
        2: [1.5, 1.0, 4 / 3, 4 / 3],
        3: [1.0, 1.5, 4 / 3, 4 / 3],
        4: [4 / 3, 5 / 3, 4 / 3, 1.5],
        5: [1.0, 1.0, 1.0, 1.0],
        6: [4 / 3, 5 / 3, 5 / 3, 1.5],
        7: [2.0, 2.0, 2.0, 2.0],
    }
    # children appear in creation order: corner at v0, v1, v2, then centre
    for parent, vals in expected_by_parent.items():
        kids = np.flatnonzero(fine.parent_map == parent)
        assert len(kids) == 4
        assert np.allclose(out.values[kids], vals, atol=1e-14)


def test_missing_parent_map_raises(coarse_built):
    _, mesh, _ = coarse_built
    field = CoefficientField.constant(mesh, 1.5, upper=2.0)
    with pytest.raises(LineageError):
        interpolate_coefficient(field, mesh)  # level-0 mesh has no parents


def test_clamp_pins_off_design_values(coarse_built):
    _, mesh, _ = coarse_built
    field = CoefficientField.constant(mesh, 1.5, upper=2.0)
    field.values += 10.0
    field.clamp()
    assert field.values.max() <= 2.0
    assert np.all(field.values[~field.design_mask] == 1.0)
    field.validate()
