"""Volume-fraction meshing with topological threshold control.

Pipeline: load dirty 2D/3D geometry, sample generalized winding numbers on
a background grid (cells and subcells), compute the persistent homology of
the threshold family, extract a mesh at a chosen volume-fraction
threshold, and repair aliasing artifacts (pinches, archipelagos) from the
subcell data.  A regime harness verifies the gap-resolution bounds, the
refinement counterexample, and the wedge archipelago band.
"""

from .geometry import (
    GeometryError,
    GeometrySoup,
    Segment2,
    Triangle3,
    load_geometry,
    make_soup_2d,
    make_soup_3d,
    min_distance,
    on_boundary,
    winding_2d,
    winding_3d,
    winding_many,
)
from .grid import (
    Grid,
    GridError,
    SubcellIndex,
    VolumeFractionField,
    build_grid,
    compute_field,
    lattice_points_world,
    rotation_matrix_2d,
    rotation_matrix_3d,
    sample_points,
)
from .mesher import (
    CONNECT,
    SEPARATE,
    CubicalMesh,
    FiveSplit,
    MeshError,
    Pinch,
    QuarterSplit,
    RepairReport,
    apply_pinch_templates_2d,
    classify_pinch,
    detect_pinches,
    export_mesh,
    extract_mesh,
    join_archipelago,
    remove_islands,
    repair_mesh,
    resolve_adjacent_conflicts,
    taxonomy_3d,
)
from .persistence import (
    BettiCurve,
    FiltrationComplex,
    PersistenceDiagram,
    betti_at,
    betti_curve,
    compute_diagram,
    dualize_2d,
    dualize_3d,
    export_betti_curve_csv,
    export_diagram_csv,
    export_diagram_svg,
    lower_star_filtration,
    reduce_filtration,
)
from .theory import (
    GapScenario,
    RegimeError,
    RegimeReport,
    area_A1,
    area_A2,
    cell_halfspace_area_oracle,
    nonconvergence_case,
    sweep_gap,
    wedge_case,
)

__version__ = "0.1.0"
