"""Lipschitz parameterizations of C^1 level-set surfaces in the Heisenberg group."""

from .construction import (
    Chart,
    LipschitzConstants,
    RegionConstants,
    build_chart,
    estimate_B,
    estimate_region_constants,
    lipschitz_constants,
    normalize_surface,
    psi,
    seed_curve_phi,
)
from .flows import FlowCurve, char_locus_scan, flow_theta, is_characteristic, v_field
from .heisenberg import (
    NPoint,
    Point,
    cc_dist,
    dilate,
    dN,
    gauge_dist,
    gauge_norm,
    group_inv,
    group_mul,
    rotate_z,
)
from .surface import SurfaceExpr, diff, evaluate, horizontal_derivs, parse
from .verify import (
    BoundCheck,
    LipschitzReport,
    check_claim2,
    check_claim3_bounds,
    hausdorff_box_count,
    verify_lipschitz,
)

__version__ = "0.1.0"
