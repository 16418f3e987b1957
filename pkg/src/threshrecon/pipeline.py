"""End-to-end reconstruction: cloud -> distance -> threshold dynamics -> interface."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

from .cloud import PointCloud, check_in_domain
from .distance import (
    BRUTE_COST_LIMIT,
    SweepConfig,
    distance_brute,
    distance_sweep,
)
from .extract import Polyline2D, TriMesh, extract_iso
from .grid import Grid, IndicatorField, ScalarField
from .heat import SpectralPlan, gauss_convolve
from .solver import (
    InitSpec,
    SolveConfig,
    SolveResult,
    Weights,
    default_schedule,
    init_guess,
    make_weights,
    run_adaptive,
    run_fixed_tau,
)

__all__ = ["ReconstructionResult", "reconstruct_cloud", "default_init"]


@dataclass
class ReconstructionResult:
    grid: Grid
    cloud: PointCloud
    config: SolveConfig
    dist_backend: str
    distance: ScalarField
    weights: Weights
    u0: IndicatorField
    solve: SolveResult
    mollified: Optional[ScalarField]
    interface: Union[Polyline2D, TriMesh, None]
    iso_source: str
    extract_error: Optional[str]
    timings: Dict[str, float]

    @property
    def converged(self) -> bool:
        return self.solve.converged and self.interface is not None


def default_init(grid: Grid) -> InitSpec:
    """Ball of radius 2 in 2D; distance sublevel set at 4h in 3D."""
    if grid.dim == 2:
        return InitSpec.ball(radius=2.0)
    return InitSpec.level_set(sigma=4.0 * grid.h)


def reconstruct_cloud(
    cloud: PointCloud,
    grid: Grid,
    *,
    algorithm: str = "fac",
    p: float = 2.0,
    tau: Optional[float] = None,
    schedule: Optional[Tuple[float, ...]] = None,
    dist_backend: str = "auto",
    sweep_config: Optional[SweepConfig] = None,
    init: Optional[InitSpec] = None,
    iso_source: str = "mollified",
    iso: float = 0.5,
    log_energy: bool = True,
    plan: Optional[SpectralPlan] = None,
) -> ReconstructionResult:
    """Run the full reconstruction pipeline on one cloud.

    Passing tau runs a single fixed-tau relaxation; otherwise the schedule
    (default: 0.02 halved four times) is run adaptively.  iso_source picks
    whether the interface is extracted from the mollified indicator
    G_tau_last * u (default) or from the raw indicator.
    """
    if tau is not None and schedule is not None:
        raise ValueError("pass either tau (fixed) or schedule (adaptive), not both")
    if iso_source not in ("mollified", "raw"):
        raise ValueError(f"iso_source must be 'mollified' or 'raw', got {iso_source!r}")
    check_in_domain(cloud, grid)

    timings: Dict[str, float] = {}
    t_total = time.perf_counter()

    if dist_backend == "auto":
        cost = cloud.n_points * grid.node_count
        dist_backend = "brute" if cost <= BRUTE_COST_LIMIT else "sweep"
    t0 = time.perf_counter()
    if dist_backend == "brute":
        dist = distance_brute(cloud, grid)
    elif dist_backend == "sweep":
        dist = distance_sweep(cloud, grid, sweep_config)
    else:
        raise ValueError(f"dist_backend must be 'auto', 'brute' or 'sweep', got {dist_backend!r}")
    timings["distance"] = time.perf_counter() - t0

    weights = make_weights(dist, p)
    u0 = init_guess(init or default_init(grid), grid, distance=dist)
    plan = plan or SpectralPlan(grid)

    t0 = time.perf_counter()
    if tau is not None:
        cfg = SolveConfig(
            algorithm=algorithm, p=p, tau=tau, log_energy=log_energy
        )
        solve = run_fixed_tau(cfg, u0, weights, plan)
    else:
        cfg = SolveConfig(
            algorithm=algorithm,
            p=p,
            tau_schedule=schedule or default_schedule(),
            log_energy=log_energy,
        )
        solve = run_adaptive(cfg, u0, weights, plan)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tau_last = solve.taus[-1]
    mollified = gauss_convolve(solve.u_final.to_scalar(), tau_last, plan)
    iso_field = mollified if iso_source == "mollified" else solve.u_final
    interface = None
    extract_error = None
    try:
        interface = extract_iso(iso_field, iso)
    except ValueError as exc:
        extract_error = str(exc)
    timings["extract"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_total

    return ReconstructionResult(
        grid=grid,
        cloud=cloud,
        config=cfg,
        dist_backend=dist_backend,
        distance=dist,
        weights=weights,
        u0=u0,
        solve=solve,
        mollified=mollified,
        interface=interface,
        iso_source=iso_source,
        extract_error=extract_error,
        timings=timings,
    )
