"""Unsigned distance fields from a point cloud, and the powers used as weights.

Two backends compute d(x) = min over cloud points of |x - y|:

* distance_brute: direct evaluation of the minimum, vectorized over node
  chunks.  Exact up to floating point, cost O(n_points * n_nodes); serves as
  the reference the sweeping solver is checked against.
* distance_sweep: first-order Lax-Friedrichs fast sweeping for |grad d| = 1
  with d = 0 on the cloud.  Nodes within freeze_radius cells (Chebyshev) of
  a cloud point are pinned to their brute-force values; the rest start at
  the domain diameter and relax through alternating sweep orderings.

The distance is always the true Euclidean one: sweeps treat the domain
boundary with one-sided extrapolation instead of wrapping, so clouds kept
well inside the domain never see the periodic identification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .cloud import PointCloud, check_in_domain
from .grid import Grid, ScalarField

__all__ = [
    "SweepConfig",
    "SweepConvergenceError",
    "distance_brute",
    "distance_sweep",
    "distance_field",
    "weight_field",
    "BRUTE_COST_LIMIT",
]

# Largest n_points * n_nodes product still sent to the brute backend by default.
BRUTE_COST_LIMIT = 2_000_000_000


class SweepConvergenceError(RuntimeError):
    """Raised when sweeping fails to meet tolerance within max_rounds."""

    def __init__(self, rounds: int, residual: float, tolerance: float):
        self.rounds = rounds
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(
            f"sweeping did not converge after {rounds} rounds: "
            f"residual {residual:.3e} > tolerance {tolerance:.3e}"
        )


@dataclass(frozen=True)
class SweepConfig:
    """Sweeping parameters.

    tolerance: max node change per round at which iteration stops; defaults
        to 1e-6 * h, far below the scheme's own O(h) accuracy.
    max_rounds: each round runs all 2**dim sweep orderings once.
    freeze_radius: nodes within this many cells (Chebyshev) of a cloud point
        are frozen at their exact distances.
    """

    tolerance: Optional[float] = None
    max_rounds: int = 500
    freeze_radius: int = 1

    def __post_init__(self):
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        if self.freeze_radius < 0:
            raise ValueError("freeze_radius must be nonnegative")


def _node_block_min(block: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # (nodes, 1, dim) against (1, npts, dim); accumulate per axis to bound memory
    d2 = np.zeros((block.shape[0], pts.shape[0]))
    for a in range(pts.shape[1]):
        d2 += (block[:, None, a] - pts[None, :, a]) ** 2
    return np.sqrt(d2.min(axis=1))


def _brute_values(nodes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    out = np.empty(nodes.shape[0])
    block = max(1, 16_000_000 // max(1, pts.shape[0]))
    for start in range(0, nodes.shape[0], block):
        sl = slice(start, start + block)
        out[sl] = _node_block_min(nodes[sl], pts)
    return out


def distance_brute(cloud: PointCloud, grid: Grid) -> ScalarField:
    """Exact (non-periodic) Euclidean distance to the nearest cloud point."""
    check_in_domain(cloud, grid)
    nodes = np.stack([c.reshape(-1) for c in grid.meshgrid()], axis=1)
    return ScalarField(grid, _brute_values(nodes, cloud.points).reshape(grid.shape))


def _frozen_mask(cloud: PointCloud, grid: Grid, freeze_radius: int) -> np.ndarray:
    n = grid.cells_per_axis
    mask = np.zeros(grid.shape, dtype=bool)
    # cell-index window per point; clamp because the metric is non-periodic
    scaled = (cloud.points + grid.extent) / grid.h
    lo = np.clip(np.ceil(scaled - freeze_radius - 1e-9).astype(np.int64), 0, n - 1)
    hi = np.clip(np.floor(scaled + freeze_radius + 1e-9).astype(np.int64), 0, n - 1)
    for a, b in zip(lo, hi):
        window = tuple(slice(int(a[ax]), int(b[ax]) + 1) for ax in range(grid.dim))
        mask[window] = True
    return mask


@njit(cache=True)
def _sweep_2d(d, frozen, h, s0, s1):
    n0, n1 = d.shape
    i0 = 0 if s0 > 0 else n0 - 1
    j0 = 0 if s1 > 0 else n1 - 1
    for ii in range(n0):
        i = i0 + s0 * ii
        for jj in range(n1):
            j = j0 + s1 * jj
            if frozen[i, j]:
                continue
            c = d[i, j]
            up0 = d[i + 1, j] if i + 1 < n0 else 2.0 * c - d[i - 1, j]
            dn0 = d[i - 1, j] if i - 1 >= 0 else 2.0 * c - d[i + 1, j]
            up1 = d[i, j + 1] if j + 1 < n1 else 2.0 * c - d[i, j - 1]
            dn1 = d[i, j - 1] if j - 1 >= 0 else 2.0 * c - d[i, j + 1]
            g0 = (up0 - dn0) / (2.0 * h)
            g1 = (up1 - dn1) / (2.0 * h)
            grad = np.sqrt(g0 * g0 + g1 * g1)
            d[i, j] = 0.5 * h * (1.0 - grad) + 0.25 * (up0 + dn0 + up1 + dn1)


@njit(cache=True)
def _sweep_3d(d, frozen, h, s0, s1, s2):
    n0, n1, n2 = d.shape
    i0 = 0 if s0 > 0 else n0 - 1
    j0 = 0 if s1 > 0 else n1 - 1
    k0 = 0 if s2 > 0 else n2 - 1
    third = 1.0 / 3.0
    for ii in range(n0):
        i = i0 + s0 * ii
        for jj in range(n1):
            j = j0 + s1 * jj
            for kk in range(n2):
                k = k0 + s2 * kk
                if frozen[i, j, k]:
                    continue
                c = d[i, j, k]
                up0 = d[i + 1, j, k] if i + 1 < n0 else 2.0 * c - d[i - 1, j, k]
                dn0 = d[i - 1, j, k] if i - 1 >= 0 else 2.0 * c - d[i + 1, j, k]
                up1 = d[i, j + 1, k] if j + 1 < n1 else 2.0 * c - d[i, j - 1, k]
                dn1 = d[i, j - 1, k] if j - 1 >= 0 else 2.0 * c - d[i, j + 1, k]
                up2 = d[i, j, k + 1] if k + 1 < n2 else 2.0 * c - d[i, j, k - 1]
                dn2 = d[i, j, k - 1] if k - 1 >= 0 else 2.0 * c - d[i, j, k + 1]
                g0 = (up0 - dn0) / (2.0 * h)
                g1 = (up1 - dn1) / (2.0 * h)
                g2 = (up2 - dn2) / (2.0 * h)
                grad = np.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
                d[i, j, k] = third * (
                    h * (1.0 - grad) + 0.5 * (up0 + dn0 + up1 + dn1 + up2 + dn2)
                )


_SIGNS = (1, -1)


def distance_sweep(
    cloud: PointCloud, grid: Grid, config: Optional[SweepConfig] = None
) -> ScalarField:
    """Lax-Friedrichs fast sweeping solution of |grad d| = 1, d = 0 on the cloud."""
    check_in_domain(cloud, grid)
    cfg = config or SweepConfig()
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-6 * grid.h

    frozen = _frozen_mask(cloud, grid, cfg.freeze_radius)
    if not frozen.any():
        raise ValueError("freeze_radius produced no source nodes")
    nodes = np.stack([c.reshape(-1) for c in grid.meshgrid()], axis=1)
    d = np.full(grid.shape, 2.0 * grid.extent * np.sqrt(grid.dim))
    flat = frozen.reshape(-1)
    d.reshape(-1)[flat] = _brute_values(nodes[flat], cloud.points)

    for rounds in range(1, cfg.max_rounds + 1):
        before = d.copy()
        if grid.dim == 2:
            for s0 in _SIGNS:
                for s1 in _SIGNS:
                    _sweep_2d(d, frozen, grid.h, s0, s1)
        else:
            for s0 in _SIGNS:
                for s1 in _SIGNS:
                    for s2 in _SIGNS:
                        _sweep_3d(d, frozen, grid.h, s0, s1, s2)
        residual = float(np.abs(d - before).max())
        if residual < tol:
            return ScalarField(grid, d)
    raise SweepConvergenceError(cfg.max_rounds, residual, tol)


def distance_field(
    cloud: PointCloud,
    grid: Grid,
    backend: str = "auto",
    config: Optional[SweepConfig] = None,
) -> ScalarField:
    """Dispatch to a distance backend.

    "auto" picks brute force while n_points * n_nodes stays at or below
    BRUTE_COST_LIMIT and sweeping beyond that.
    """
    if backend == "auto":
        cost = cloud.n_points * grid.node_count
        backend = "brute" if cost <= BRUTE_COST_LIMIT else "sweep"
    if backend == "brute":
        return distance_brute(cloud, grid)
    if backend == "sweep":
        return distance_sweep(cloud, grid, config)
    raise ValueError(f"backend must be 'auto', 'brute' or 'sweep', got {backend!r}")


def weight_field(d: ScalarField, p: float, mode: str = "full") -> ScalarField:
    """Raise a distance field to the power p ("full") or p/2 ("half")."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if mode not in ("full", "half"):
        raise ValueError(f"mode must be 'full' or 'half', got {mode!r}")
    if d.values.min() < 0:
        raise ValueError("distance field must be nonnegative")
    power = p if mode == "full" else p / 2.0
    return ScalarField(d.grid, d.values**power)
