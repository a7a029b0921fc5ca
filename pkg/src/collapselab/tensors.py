"""Typed tensor components on a product-torus grid.

A :class:`TensorField` stores one complex array whose leading axes enumerate
tensor components (one axis of length m+n per index slot) and whose trailing
axes are the spatial grid.  Slots are typed by variance and holomorphy:

    COV_H   lower holomorphic      T_i
    COV_A   lower antiholomorphic  T_ibar
    CON_H   upper holomorphic      T^i
    CON_A   upper antiholomorphic  T^ibar

Covariant derivatives append slots at the end in application order; all index
gymnastics elsewhere are explicit einsums over the leading axes.

Serialization is a single file: a JSON header describing (m, n, points,
period, slots) followed by the raw little-endian complex128 component block
in row-major order, components before points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidDimensionError, NoFiberError
from .grid import PeriodicGrid, ScalarField, fiber_average_data

_MAGIC = b"CLFLD1\n"


class Slot(Enum):
    """Index-slot kind: variance (cov/contra) and holomorphy."""

    COV_H = "cov-holo"
    COV_A = "cov-antiholo"
    CON_H = "contra-holo"
    CON_A = "contra-antiholo"

    @property
    def is_cov(self) -> bool:
        return self in (Slot.COV_H, Slot.COV_A)

    @property
    def is_holo(self) -> bool:
        return self in (Slot.COV_H, Slot.CON_H)

    def conjugate(self) -> "Slot":
        """Slot kind after complex conjugation of the tensor."""
        return {
            Slot.COV_H: Slot.COV_A,
            Slot.COV_A: Slot.COV_H,
            Slot.CON_H: Slot.CON_A,
            Slot.CON_A: Slot.CON_H,
        }[self]


METRIC_SLOTS = (Slot.COV_H, Slot.COV_A)


@dataclass(frozen=True)
class TensorField:
    """Grid of tensor components with typed index slots."""

    grid: PeriodicGrid
    slots: tuple[Slot, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        d = self.grid.dim
        expected = (d,) * len(self.slots) + self.grid.spatial_shape
        if self.data.shape != expected:
            raise InvalidDimensionError(
                f"component shape {self.data.shape} does not match slots "
                f"{[s.value for s in self.slots]} on grid {expected}"
            )

    @property
    def rank(self) -> int:
        return len(self.slots)

    def __add__(self, other: "TensorField") -> "TensorField":
        if self.slots != other.slots:
            raise InvalidDimensionError("cannot add tensors with different slots")
        return TensorField(self.grid, self.slots, self.data + other.data)

    def __sub__(self, other: "TensorField") -> "TensorField":
        if self.slots != other.slots:
            raise InvalidDimensionError("cannot subtract tensors with different slots")
        return TensorField(self.grid, self.slots, self.data - other.data)

    def __mul__(self, scalar) -> "TensorField":
        return TensorField(self.grid, self.slots, self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TensorField":
        return TensorField(self.grid, self.slots, -self.data)

    def conj(self) -> "TensorField":
        """Complex conjugate; every slot swaps holomorphy."""
        return TensorField(
            self.grid, tuple(s.conjugate() for s in self.slots), np.conj(self.data)
        )

    def component(self, *index: int) -> ScalarField:
        if len(index) != self.rank:
            raise InvalidDimensionError("component index count must match rank")
        return ScalarField(self.grid, np.ascontiguousarray(self.data[index]))

    def sup(self) -> float:
        """Largest componentwise magnitude (coordinate sup, not a metric norm)."""
        return float(np.max(np.abs(self.data)))


def zero_tensor(grid: PeriodicGrid, slots) -> TensorField:
    slots = tuple(slots)
    shape = (grid.dim,) * len(slots) + grid.spatial_shape
    return TensorField(grid, slots, np.zeros(shape, dtype=np.complex128))


def hermitian_part(t: TensorField) -> TensorField:
    """Hermitize a (COV_H, COV_A) tensor: g_ij <- (g_ij + conj(g_ji)) / 2."""
    if t.slots != METRIC_SLOTS:
        raise InvalidDimensionError("hermitian_part expects a (1,1) lower tensor")
    sym = 0.5 * (t.data + np.conj(np.swapaxes(t.data, 0, 1)))
    return TensorField(t.grid, t.slots, sym)


def hermitian_defect(t: TensorField) -> float:
    if t.slots != METRIC_SLOTS:
        raise InvalidDimensionError("hermitian_defect expects a (1,1) lower tensor")
    return float(np.max(np.abs(t.data - np.conj(np.swapaxes(t.data, 0, 1)))))


def matrix_view(t: TensorField) -> np.ndarray:
    """(points..., d, d) view of a (1,1) lower tensor for batched linalg."""
    if t.slots != METRIC_SLOTS:
        raise InvalidDimensionError("matrix_view expects a (1,1) lower tensor")
    return np.moveaxis(t.data, (0, 1), (-2, -1))


def tensor_from_matrix(grid: PeriodicGrid, mat: np.ndarray) -> TensorField:
    """Inverse of :func:`matrix_view`."""
    return TensorField(grid, METRIC_SLOTS, np.moveaxis(mat, (-2, -1), (0, 1)))


def constant_hermitian(grid: PeriodicGrid, matrix) -> TensorField:
    """(1,1) lower tensor with the same hermitian matrix at every point."""
    m = np.asarray(matrix, dtype=np.complex128)
    if m.shape != (grid.dim, grid.dim):
        raise InvalidDimensionError("matrix must be (dim, dim)")
    data = np.broadcast_to(
        m.reshape((grid.dim, grid.dim) + (1,) * grid.real_dim),
        (grid.dim, grid.dim) + grid.spatial_shape,
    ).copy()
    return TensorField(grid, METRIC_SLOTS, data)


def fiber_average_tensor(t: TensorField) -> TensorField:
    return TensorField(t.grid, t.slots, fiber_average_data(t.data, t.grid))


def pullback_tensor(t: TensorField, total_grid: PeriodicGrid) -> TensorField:
    """Pull a base-grid tensor back through the projection.

    Components keep their base index range; entries in fiber index positions
    are zero, and values are constant along fibers.
    """
    base = t.grid
    if base.n != 0:
        raise InvalidDimensionError("pullback source must live on the base grid")
    if base.points != total_grid.points or base.m != total_grid.m:
        raise InvalidDimensionError("incompatible base/total grids")
    d, db = total_grid.dim, base.dim
    out = np.zeros(
        (d,) * t.rank + total_grid.spatial_shape, dtype=np.complex128
    )
    src = t.data.reshape(t.data.shape + (1,) * (2 * total_grid.n))
    out[(slice(0, db),) * t.rank] = src
    return TensorField(total_grid, t.slots, out)


def restrict_tensor_to_base(t: TensorField, strict_tol: float | None = None) -> TensorField:
    """Keep base-indexed components on the base grid (fiber slice at 0).

    With ``strict_tol`` set, raises if fiber-index components or fiber
    variation exceed the tolerance.
    """
    grid = t.grid
    if grid.n == 0:
        raise NoFiberError("tensor already lives on a base-only grid")
    base = grid.base_grid
    if strict_tol is not None:
        var = np.max(np.abs(t.data - fiber_average_data(t.data, grid)))
        mask = np.zeros((grid.dim,) * t.rank, dtype=bool)
        mask[(slice(0, base.dim),) * t.rank] = True
        leak = np.max(np.abs(t.data[~mask])) if (~mask).any() else 0.0
        if max(var, leak) > strict_tol:
            raise InvalidDimensionError(
                f"tensor is not a base pullback (variation {var:.2e}, "
                f"fiber components {leak:.2e})"
            )
    index = (slice(0, base.dim),) * t.rank + (slice(None),) * (2 * grid.m) + (
        0,
    ) * (2 * grid.n)
    return TensorField(base, t.slots, np.ascontiguousarray(t.data[index]))


# ---------------------------------------------------------------------------
# serialization


def _header(obj) -> dict:
    grid = obj.grid
    slots = [s.value for s in obj.slots] if isinstance(obj, TensorField) else []
    return {
        "m": grid.m,
        "n": grid.n,
        "points": grid.points,
        "period": grid.period,
        "slots": slots,
        "dtype": "complex128",
        "byte_order": "little-endian",
        "layout": "row-major, component axes before point axes",
    }


def save_field(path, obj) -> None:
    """Write a ScalarField or TensorField: JSON header + raw component block."""
    data = obj.values if isinstance(obj, ScalarField) else obj.data
    header = json.dumps(_header(obj)).encode("utf-8")
    buf = np.ascontiguousarray(data.astype("<c16"))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(buf.tobytes())


def load_field(path):
    """Read a field written by :func:`save_field`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise InvalidDimensionError(f"{path}: not a field file")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        raw = fh.read()
    grid = PeriodicGrid(header["m"], header["n"], header["points"], header["period"])
    slots = tuple(Slot(s) for s in header["slots"])
    shape = (grid.dim,) * len(slots) + grid.spatial_shape
    data = np.frombuffer(raw, dtype="<c16").reshape(shape).astype(np.complex128)
    if slots:
        return TensorField(grid, slots, data)
    return ScalarField(grid, data)
