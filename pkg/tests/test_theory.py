import math

import numpy as np
import pytest
from scipy import ndimage

from vfmesh.grid import SubcellIndex
from vfmesh.theory import (
    THETA_HI,
    THETA_LO,
    GapScenario,
    RegimeError,
    area_A1,
    area_A2,
    cell_halfspace_area_oracle,
    clip_polygon_halfplane,
    gap_sample_via_pipeline,
    gap_soup,
    nonconvergence_case,
    polygon_area,
    regime_boundary_L,
    sweep_gap,
    two_wedge_soup,
    wedge_case,
)
from vfmesh.theory import _connected_sides_anchored, _mask_edges_4, _site_vf, \
    _sample_projection_offsets

R = math.sqrt(2.0) / 2.0


# ---------------------------------------------------------------------------
# Closed forms vs the clipping oracle

def test_A1_no_gap_axis_aligned():
    assert area_A1(THETA_LO, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_A1_matches_half_of_remainder():
    for L in (0.2, 0.4):
        v = area_A1(THETA_LO, L, 1.0)
        assert v == pytest.approx((1.0 - L) / 2.0, abs=1e-12)
        assert v == pytest.approx(cell_halfspace_area_oracle(THETA_LO, L), abs=1e-12)


def test_A2_anchor_quarter_cell():
    # at the diamond orientation and L = (sqrt(2)-1) ell the one-sided
    # area is exactly ell^2 / 4
    assert area_A2(THETA_HI, math.sqrt(2.0) - 1.0, 1.0) == 0.25


def test_equality_point():
    L_star = 2.0 * (2.0 - math.sqrt(2.0)) * R
    a1 = area_A1(THETA_LO, L_star, 1.0)
    a2 = area_A2(THETA_HI, L_star, 1.0)
    assert abs(a1 - a2) < 1e-10
    assert a1 == pytest.approx(((2.0 - math.sqrt(2.0)) / 2.0) ** 2, abs=1e-12)


def test_transition_continuity():
    for theta in np.linspace(THETA_LO + 1e-6, THETA_HI, 25):
        Lb = regime_boundary_L(theta)
        assert abs(area_A1(theta, Lb) - area_A2(theta, Lb)) < 1e-10


def test_closed_forms_match_oracle_lattice():
    thetas = np.linspace(THETA_LO, THETA_HI, 50)
    for theta in thetas:
        Lb = regime_boundary_L(theta)
        for L in np.linspace(0.0, Lb, 50):
            assert abs(area_A1(theta, L) - cell_halfspace_area_oracle(theta, L)) < 1e-10
    for theta in thetas[1:]:
        hi = -2.0 * R * math.sin(theta)
        for L in np.linspace(regime_boundary_L(theta), hi, 50):
            assert abs(area_A2(theta, L) - cell_halfspace_area_oracle(theta, L)) < 1e-10


def test_regime_errors():
    with pytest.raises(RegimeError):
        area_A1(THETA_LO, 1.5, 1.0)       # beyond the parallelogram regime
    with pytest.raises(RegimeError):
        area_A2(THETA_LO, 0.5, 1.0)       # ill-defined orientation
    with pytest.raises(RegimeError):
        area_A2(THETA_HI, 2.0, 1.0)       # gap swallows the cell
    with pytest.raises(RegimeError):
        area_A1(0.0, 0.1, 1.0)            # theta outside the symmetry range


def test_A2_critical_points():
    # dA2/dtheta = 0 at theta = 3pi/2 for L <= sqrt(2) ell / 2, and at
    # theta = pi + asin(r / L) for larger L
    h = 1e-6
    for L in (0.5, 0.6, 0.7):
        d = (area_A2(THETA_HI, L) - area_A2(THETA_HI - h, L)) / h
        assert abs(d) < 1e-4
    for L in (0.8, 0.9):
        theta_c = math.pi + math.asin(R / L)
        d = (area_A2(theta_c + h, L) - area_A2(theta_c - h, L)) / (2 * h)
        assert abs(d) < 1e-4


def test_clip_oracle_square():
    square = [(0, 0), (1, 0), (1, 1), (0, 1)]
    clipped = clip_polygon_halfplane(square, (1, 0), 0.3)
    assert abs(abs(polygon_area(clipped)) - 0.3) < 1e-12
    assert clip_polygon_halfplane(square, (1, 0), -1.0) == []


# ---------------------------------------------------------------------------
# Sweep kernel: derived single-sample classifications

def kernel_classify(L, phi, delta, aa, s=64):
    rep = sweep_gap(L_values=[L], theta_values=[THETA_LO + phi], offsets=[delta],
                    s=s, with_antialiasing=aa)
    return bool(rep.closed[0, 0, 0])


def test_small_gap_always_closed():
    for aa in (False, True):
        for phi in (0.0, 0.3, math.pi / 4):
            for d in (0.0, 0.25, 0.61):
                assert kernel_classify(0.3, phi, d, aa)


def test_large_gap_always_open():
    for aa in (False, True):
        for phi in (0.0, 0.3, math.pi / 4):
            for d in (0.0, 0.25, 0.61):
                assert not kernel_classify(1.25, phi, d, aa)


def test_mid_gap_translation_ambiguity_without_aa():
    # L = 0.6: aligned offset keeps both straddling cells, centered kills one
    assert kernel_classify(0.6, 0.0, 0.0, aa=False)
    assert not kernel_classify(0.6, 0.0, 0.5, aa=False)


def test_aa_resolves_above_subgrid_bound():
    # L = 0.9 >= sqrt(2)/2: anti-aliasing separates even the aligned case
    assert kernel_classify(0.9, 0.0, 0.0, aa=False)
    assert not kernel_classify(0.9, 0.0, 0.0, aa=True)
    assert not kernel_classify(0.9, 0.0, 0.5, aa=True)


def test_aa_ambiguity_persists_below_half_cell():
    # L = 0.45 < 1/2: axis-aligned grids close the gap, the diamond
    # orientation with a centered cell stays open even with anti-aliasing
    assert kernel_classify(0.45, 0.0, 0.0, aa=True)
    assert not kernel_classify(0.45, math.pi / 4, 0.0, aa=True)


# ---------------------------------------------------------------------------
# Kernel vs the real winding pipeline

def test_kernel_values_match_pipeline_field():
    rng = np.random.default_rng(21)
    for _ in range(4):
        L = float(rng.uniform(0.3, 1.1))
        phi = float(rng.uniform(0.0, math.pi / 4))
        delta = float(rng.uniform(0.0, 1.0))
        scn = GapScenario(1.0, L, THETA_LO + phi,
                          (delta * math.cos(phi), delta * math.sin(phi)))
        s = 8
        closed, field = gap_sample_via_pipeline(scn, s=s, window_cells=6)
        proj = _sample_projection_offsets(phi, s, 1.0)
        grid = field.grid
        half_extent = 6 * 2.0  # slab half-size used by the pipeline helper

        def in_slab_window(pt):
            # the analytic kernel models infinite half-spaces; compare only
            # where the finite slabs behave identically
            return abs(pt[0]) < L / 2 + half_extent - 2 and abs(pt[1]) < half_extent - 2

        checked = 0
        for i in range(0, grid.extents[0], 3):
            for j in range(0, grid.extents[1], 3):
                c = grid.cell_center_world((i, j))
                if not in_slab_window(c):
                    continue
                want = _site_vf(proj, np.array([[c[0]]]), L)[0, 0]
                assert abs(field.cells[i, j] - want) < 1e-9
                checked += 1
        # interior vertices and edges share the same lattice table
        for i in range(1, grid.extents[0], 4):
            for j in range(1, grid.extents[1], 4):
                pt = grid.node_world((i, j))
                if not in_slab_window(pt):
                    continue
                want = _site_vf(proj, np.array([[pt[0]]]), L)[0, 0]
                assert abs(field.vertices[i, j] - want) < 1e-9
                pe = grid.subcell_center_world(SubcellIndex("edge", (i, j), axis=0))
                if in_slab_window(pe):
                    want_e = _site_vf(proj, np.array([[pe[0]]]), L)[0, 0]
                    assert abs(field.edges[0][i, j] - want_e) < 1e-9
        assert checked > 10


def test_kernel_classifier_matches_label_based_classifier():
    # same retained mask, same anchors: graph classifier == scipy labeling
    rng = np.random.default_rng(22)
    for _ in range(6):
        L = float(rng.uniform(0.3, 1.1))
        phi = float(rng.uniform(0.0, math.pi / 4))
        delta = float(rng.uniform(0.0, 1.0))
        scn = GapScenario(1.0, L, THETA_LO + phi,
                          (delta * math.cos(phi), delta * math.sin(phi)))
        closed, field = gap_sample_via_pipeline(scn, s=8, window_cells=6)
        grid = field.grid
        centers_x = np.empty(grid.extents)
        for i in range(grid.extents[0]):
            for j in range(grid.extents[1]):
                centers_x[i, j] = grid.cell_center_world((i, j))[0]
        mask = field.cells >= 0.5
        margin = L / 2.0 + 2.0
        window = np.abs(centers_x) <= 12.0
        m = mask & window
        left = (centers_x <= -margin) & window
        right = (centers_x >= margin) & window
        got = _connected_sides_anchored(m[None], left[None], right[None],
                                        _mask_edges_4)[0]
        labels, _ = ndimage.label(m, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        lab_l = np.unique(labels[left & m])
        lab_r = np.unique(labels[right & m])
        want = bool(np.intersect1d(lab_l[lab_l > 0], lab_r[lab_r > 0]).size)
        assert got == want == closed


def test_gap_soup_is_indicator():
    from vfmesh.geometry import winding_many

    soup = gap_soup(0.5, half=10.0)
    pts = np.array([[-1.0, 0.3], [1.0, -2.0], [0.0, 0.0], [0.2, 1.0], [-0.2, -1.0]])
    w = winding_many(pts, soup)
    assert np.allclose(w, [1, 1, 0, 0, 0], atol=1e-10)


# ---------------------------------------------------------------------------
# Non-convergence counterexample (quick variant; acceptance runs 6 levels)

def test_nonconvergence_alternation_three_levels():
    rows = nonconvergence_case(2.0 / 3.0, 3, s=8)
    assert [r["b0"] for r in rows] == [1, 2, 1]
    rows = nonconvergence_case(1.0 / 3.0, 3, s=8)
    assert [r["b0"] for r in rows] == [2, 1, 2]


def test_two_wedge_geometry_fractions():
    # relative corner position alternates 2/3 <-> 1/3 under halving
    rows = nonconvergence_case(2.0 / 3.0, 4, s=8, s_check=32)
    rels = [round(r["corner_rel_x"], 6) for r in rows]
    assert rels == [round(2 / 3, 6), round(1 / 3, 6)] * 2
    for r in rows:
        target = 10.0 / 18.0 if r["corner_rel_x"] > 0.5 else 7.0 / 18.0
        assert abs(r["corner_vf"] - target) <= 0.02


def test_nonconvergence_requires_levels():
    with pytest.raises(RegimeError):
        nonconvergence_case(2.0 / 3.0, 1)


# ---------------------------------------------------------------------------
# Wedge case

def test_wedge_five_degrees():
    res = wedge_case(math.radians(5.0))
    lo, hi = res["band"]
    for d in res["island_distances"]:
        assert lo - 2.0 <= d <= hi + 2.0
    assert res["components_after"] == 1


def test_wedge_wide_angle_islands_stay_near_apex():
    res = wedge_case(math.radians(45.0))
    # cot(45) = 1: any aliasing stays within a couple of cells of the apex
    for d in res["island_distances"]:
        assert d <= 1.0 + 2.0
    assert res["components_after"] == 1


def test_wedge_rejects_bad_alpha():
    with pytest.raises(RegimeError):
        wedge_case(0.0)


# ---------------------------------------------------------------------------
# Report output

def test_report_files(tmp_path):
    rep = sweep_gap(L_values=np.array([0.3, 0.6, 1.1]),
                    theta_values=np.linspace(THETA_LO, THETA_HI, 4),
                    offsets=np.array([0.1, 0.5]), s=16)
    csv = tmp_path / "sweep.csv"
    rep.write_csv(csv)
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("L_over_ell,theta,offset_x,offset_y")
    assert len(lines) == 1 + 3 * 4 * 2
    js = tmp_path / "bands.json"
    rep.write_band_json(js)
    import json

    data = json.loads(js.read_text())
    assert data["antialiased"] is False
    assert "min_open_L" in data
