"""Uniform periodic node-centered grids and the fields that live on them.

The computational domain is the cube [-extent, extent]^dim with periodic
boundary conditions.  Each axis carries cells_per_axis nodes at coordinates
-extent + i*h with h = 2*extent/cells_per_axis; the node at +extent is
excluded because it is identified with the one at -extent.  Field values are
stored C-contiguous (row-major, last axis fastest) so that serialized output
is byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "IndicatorField",
    "make_grid",
    "sample",
    "scalar_field",
    "indicator_field",
    "dump_field",
    "load_field",
    "field_to_csv",
]

_MAGIC = b"TRF1"
_HEADER = struct.Struct("<qqd")  # dim, cells_per_axis, extent


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on [-extent, extent]^dim.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    cells_per_axis : int
        Number of nodes (= cells) along every axis, at least 8.
    extent : float
        Half-width of the domain cube.
    """

    dim: int
    cells_per_axis: int
    extent: float = math.pi

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.cells_per_axis < 8:
            raise ValueError(
                f"cells_per_axis must be at least 8, got {self.cells_per_axis}"
            )
        if not (self.extent > 0 and math.isfinite(self.extent)):
            raise ValueError(f"extent must be positive and finite, got {self.extent}")

    @property
    def h(self) -> float:
        """Node spacing, identical on every axis."""
        return 2.0 * self.extent / self.cells_per_axis

    @property
    def shape(self) -> tuple:
        return (self.cells_per_axis,) * self.dim

    @property
    def node_count(self) -> int:
        return self.cells_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        """Quadrature weight of one node, h**dim."""
        return self.h**self.dim

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis (the +extent node is excluded)."""
        n = self.cells_per_axis
        return -self.extent + self.h * np.arange(n)

    def meshgrid(self) -> tuple:
        """Coordinate arrays of shape ``self.shape``, one per axis ('ij' order)."""
        ax = self.axis_coords()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.dim == other.dim
            and self.cells_per_axis == other.cells_per_axis
            and self.extent == other.extent
        )

    def __hash__(self):
        return hash((self.dim, self.cells_per_axis, self.extent))


def make_grid(dim: int, cells_per_axis: int, extent: float = math.pi) -> Grid:
    """Construct a periodic grid; see Grid for the validation rules."""
    return Grid(dim=dim, cells_per_axis=cells_per_axis, extent=float(extent))


def _frozen_array(values, dtype, grid: Grid, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != grid.shape:
        if arr.size == grid.node_count:
            arr = arr.reshape(grid.shape)
        else:
            raise ValueError(
                f"{name} values have shape {arr.shape}, expected {grid.shape}"
            )
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite float64 value per grid node, immutable once constructed."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, np.float64, self.grid, "ScalarField")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarField values must all be finite")
        object.__setattr__(self, "values", arr)

    def integral(self) -> float:
        """Node-sum quadrature: sum of values times h**dim."""
        return float(self.values.sum()) * self.grid.cell_volume


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """A {0,1}-valued field; non-binary writes are impossible by construction."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if not np.isin(raw, (0, 1)).all():
            raise ValueError("IndicatorField values must be exactly 0 or 1")
        arr = _frozen_array(raw, np.uint8, self.grid, "IndicatorField")
        object.__setattr__(self, "values", arr)

    def to_scalar(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.astype(np.float64))

    def volume(self) -> float:
        """Measure of the indicated set under node-sum quadrature."""
        return float(np.count_nonzero(self.values)) * self.grid.cell_volume


Field = Union[ScalarField, IndicatorField]


def scalar_field(grid: Grid, values) -> ScalarField:
    return ScalarField(grid, values)


def indicator_field(grid: Grid, values) -> IndicatorField:
    return IndicatorField(grid, values)


def sample(grid: Grid, f: Callable) -> ScalarField:
    """Evaluate a vectorized function of the node coordinates.

    ``f`` receives one coordinate array per axis (shape ``grid.shape``) and
    must return finite values of the same shape; numpy ufunc expressions
    qualify.
    """
    out = np.asarray(f(*grid.meshgrid()), dtype=np.float64)
    out = np.broadcast_to(out, grid.shape)
    return ScalarField(grid, out.copy())


def dump_field(field: Field, path) -> None:
    """Write a field in the TRF1 binary format.

    Layout: magic b"TRF1"; dim and cells_per_axis as little-endian int64;
    extent as little-endian float64; then the node values row-major, as
    little-endian float64 for scalar fields or single bytes 0/1 for
    indicator fields.
    """
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(g.dim, g.cells_per_axis, g.extent))
        if isinstance(field, IndicatorField):
            fh.write(field.values.tobytes(order="C"))
        else:
            fh.write(field.values.astype("<f8").tobytes(order="C"))


def load_field(path) -> Field:
    """Read a TRF1 file; the payload kind is inferred from the byte count."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + _HEADER.size or blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a TRF1 field file")
    dim, n, extent = _HEADER.unpack_from(blob, len(_MAGIC))
    grid = Grid(dim=int(dim), cells_per_axis=int(n), extent=float(extent))
    payload = blob[len(_MAGIC) + _HEADER.size :]
    count = grid.node_count
    if len(payload) == 8 * count:
        values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape)
        return ScalarField(grid, values.astype(np.float64))
    if len(payload) == count:
        values = np.frombuffer(payload, dtype=np.uint8).reshape(grid.shape)
        return IndicatorField(grid, values)
    raise ValueError(
        f"{path}: payload holds {len(payload)} bytes, expected {8 * count} "
        f"(scalar) or {count} (indicator)"
    )


def field_to_csv(field: Field, path) -> None:
    """Write one row per node: the index tuple followed by the value."""
    g = field.grid
    header = ["i", "j", "k"][: g.dim] + ["value"]
    indices = np.indices(g.shape).reshape(g.dim, -1).T
    flat = field.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx, val in zip(indices, flat):
            writer.writerow([*map(int, idx), repr(float(val))])
