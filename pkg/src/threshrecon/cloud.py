"""Point cloud containers, deterministic generators, and text I/O.

Clouds are plain arrays of sample points on or near the interface to be
reconstructed.  Generators are seeded; the PRNG is numpy's PCG64 (via
numpy.random.default_rng) and the identifier "numpy:PCG64" is recorded in
generated file headers so a run can be reproduced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid

__all__ = [
    "PointCloud",
    "PolarCloudSpec",
    "TorusCloudSpec",
    "five_fold_spec",
    "three_fold_spec",
    "m_fold_spec",
    "gen_polar_cloud",
    "gen_torus_cloud",
    "polar_curve_radius",
    "add_noise",
    "load_cloud",
    "save_cloud",
    "check_in_domain",
]

PRNG_ID = "numpy:PCG64"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable (n_points, dim) array of sample points, dim 2 or 3."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError(f"points must have shape (n, 2) or (n, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise ValueError("a point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must all be finite")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def check_in_domain(cloud: PointCloud, grid: Grid) -> None:
    """Reject points on or outside the domain boundary (strict interior only)."""
    if cloud.dim != grid.dim:
        raise ValueError(f"cloud dim {cloud.dim} does not match grid dim {grid.dim}")
    if np.abs(cloud.points).max() >= grid.extent:
        raise ValueError(
            "all cloud points must lie strictly inside "
            f"(-{grid.extent}, {grid.extent})^{grid.dim}"
        )


@dataclass(frozen=True)
class PolarCloudSpec:
    """Closed planar curve r(theta) = base + amplitude*cos(folds*(theta - phase)).

    Points are placed at theta_i = 2*pi*(i-1)/n_points for i = 1..n_points,
    so theta = 2*pi is never duplicated.
    """

    n_points: int
    folds: int
    amplitude: float
    phase: float = 0.0
    base: float = 1.0

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("a closed-curve sample needs n_points >= 3")
        if self.folds < 1:
            raise ValueError("folds must be a positive integer")
        if self.base - abs(self.amplitude) <= 0:
            raise ValueError(
                "radius profile must stay positive: need base > |amplitude|, "
                f"got base={self.base}, amplitude={self.amplitude}"
            )

    def radius(self, theta):
        return self.base + self.amplitude * np.cos(self.folds * (theta - self.phase))


def five_fold_spec(n_points: int = 200) -> PolarCloudSpec:
    """Five-petal flower r = 1 + 0.5*cos(5*(theta - pi/2))."""
    return PolarCloudSpec(n_points=n_points, folds=5, amplitude=0.5, phase=math.pi / 2)


def three_fold_spec(n_points: int = 100) -> PolarCloudSpec:
    """Three-petal flower r = 1 + 0.5*cos(3*(theta - pi/2))."""
    return PolarCloudSpec(n_points=n_points, folds=3, amplitude=0.5, phase=math.pi / 2)


def m_fold_spec(m: int, n_points: int = 200) -> PolarCloudSpec:
    """m-petal flower r = 1 + 0.4*sin(m*theta)."""
    # sin(m*theta) == cos(m*(theta - pi/(2m)))
    return PolarCloudSpec(
        n_points=n_points, folds=m, amplitude=0.4, phase=math.pi / (2 * m)
    )


def polar_curve_radius(spec: PolarCloudSpec, theta):
    """Radius profile of the generating curve, usable as an analytic reference."""
    return spec.radius(theta)


def gen_polar_cloud(spec: PolarCloudSpec) -> PointCloud:
    theta = 2.0 * math.pi * np.arange(spec.n_points) / spec.n_points
    r = spec.radius(theta)
    return PointCloud(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


@dataclass(frozen=True)
class TorusCloudSpec:
    """Random samples of a torus of revolution about the z axis.

    The surface is (x, y, z) = ((R + r*cos u)*cos v, (R + r*cos u)*sin v,
    r*sin u) with (u, v) drawn independently and uniformly from [0, 2*pi)^2.
    """

    n_points: int
    ring_radius: float = 1.0
    tube_radius: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 4:
            raise ValueError("a closed-surface sample needs n_points >= 4")
        if not (0 < self.tube_radius < self.ring_radius):
            raise ValueError("need 0 < tube_radius < ring_radius")


def gen_torus_cloud(spec: TorusCloudSpec) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    uv = rng.uniform(0.0, 2.0 * math.pi, size=(spec.n_points, 2))
    u, v = uv[:, 0], uv[:, 1]
    ring = spec.ring_radius + spec.tube_radius * np.cos(u)
    pts = np.column_stack([ring * np.cos(v), ring * np.sin(v), spec.tube_radius * np.sin(u)])
    return PointCloud(pts)


def add_noise(cloud: PointCloud, mu: float, seed: int = 0) -> PointCloud:
    """Perturb every coordinate by mu times a standard normal draw (seeded)."""
    if mu < 0:
        raise ValueError(f"noise amplitude must be nonnegative, got {mu}")
    rng = np.random.default_rng(seed)
    return PointCloud(cloud.points + mu * rng.standard_normal(cloud.points.shape))


def save_cloud(cloud: PointCloud, path, comment_lines: Optional[list] = None) -> None:
    """Write one point per line as comma-separated values.

    Provenance (generator spec, seed, PRNG identifier) goes into '#' comment
    lines at the top so the file remains self-describing.
    """
    with open(path, "w") as fh:
        for line in comment_lines or []:
            fh.write(f"# {line}\n")
        for p in cloud.points:
            fh.write(",".join(repr(float(c)) for c in p) + "\n")


def load_cloud(path, format: str = "csv") -> PointCloud:
    """Read a cloud from a csv or xyz text file.

    Both formats hold one point per line, coordinates separated by commas
    and/or whitespace.  Blank lines and lines starting with '#' are ignored.
    The dimension is inferred from the column count.
    """
    if format not in ("csv", "xyz"):
        raise ValueError(f"format must be 'csv' or 'xyz', got {format!r}")
    rows = []
    ncols = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.replace(",", " ").split()
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value on line {lineno}: {stripped!r}"
                ) from None
            if ncols is None:
                ncols = len(row)
                if ncols not in (2, 3):
                    raise ValueError(
                        f"{path}: line {lineno} has {ncols} columns, expected 2 or 3"
                    )
            elif len(row) != ncols:
                raise ValueError(
                    f"{path}: ragged row on line {lineno}: got {len(row)} columns, "
                    f"expected {ncols}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no points found")
    return PointCloud(np.array(rows, dtype=np.float64))
