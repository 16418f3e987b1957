"""threshrecon: interface reconstruction from point clouds on periodic grids.

A point cloud sampled from a closed curve (2D) or surface (3D) is turned
into an indicator function by minimizing a distance-weighted interface
energy through iterated heat-kernel convolution and thresholding, then the
interface is pulled out as an iso-contour.
"""

from .cloud import (
    PointCloud,
    PolarCloudSpec,
    TorusCloudSpec,
    add_noise,
    five_fold_spec,
    gen_polar_cloud,
    gen_torus_cloud,
    load_cloud,
    m_fold_spec,
    save_cloud,
    three_fold_spec,
)
from .distance import (
    SweepConfig,
    SweepConvergenceError,
    distance_brute,
    distance_field,
    distance_sweep,
    weight_field,
)
from .extract import (
    Polyline2D,
    TriMesh,
    extract_iso,
    hausdorff_distance,
    polylines_to_csv,
    polylines_to_svg,
    sample_polar_curve,
    sample_polyline,
    sample_trimesh,
    trimesh_to_obj,
)
from .grid import (
    Grid,
    IndicatorField,
    ScalarField,
    dump_field,
    field_to_csv,
    load_field,
    make_grid,
    sample,
)
from .heat import SpectralPlan, gauss_convolve, gauss_convolve_direct
from .pipeline import ReconstructionResult, default_init, reconstruct_cloud
from .solver import (
    EnergyIncreaseError,
    InitSpec,
    SolveConfig,
    SolveResult,
    Weights,
    constant_weights,
    default_schedule,
    energy_fac,
    energy_sym,
    halving_schedule,
    init_guess,
    make_weights,
    phi_fac,
    phi_sym,
    run_adaptive,
    run_fixed_tau,
    threshold,
    write_energy_trace,
)

__version__ = "0.1.0"
