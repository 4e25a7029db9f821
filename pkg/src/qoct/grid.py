"""Uniform Cartesian grids and finite-difference calculus.

Everything downstream (Hamiltonians, observables, functionals) lives on a
box [-L, L]^dim sampled with equal spacing along every axis.  Derivatives
use 4th-order central stencils; first derivatives fall back to one-sided
4th-order closures at the box edge, while the Laplacian treats values
beyond the edge as zero (hard wall), which keeps it exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "ComplexField",
    "RealField",
    "VectorField",
    "build_grid",
    "inner_product",
    "norm",
    "normalized",
    "gradient",
    "laplacian",
    "divergence",
]

# Points per axis beyond which a 2D run stops being a desk job.
_MAX_POINTS_2D = 4096


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid on [-L, L] per axis.

    Attributes
    ----------
    dim : int
        1 or 2.
    spacing : float
        Grid step h, identical on every axis.
    half_extents : tuple of float
        Realized half box length per axis; coordinates run from -L to +L
        inclusive and always contain 0 (odd point count).
    shape : tuple of int
        Points per axis, 2*floor(L/h) + 1 each.
    """

    dim: int
    spacing: float
    half_extents: tuple[float, ...]
    shape: tuple[int, ...]

    @property
    def quadrature_weight(self) -> float:
        """Weight of the trapezoid-free Riemann sum, h**dim."""
        return self.spacing**self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Coordinate samples per axis, coordinate_i = (i - (n-1)/2) * h."""
        out = []
        for n in self.shape:
            half = (n - 1) // 2
            out.append(self.spacing * (np.arange(n) - half))
        return tuple(out)

    @cached_property
    def meshes(self) -> tuple[np.ndarray, ...]:
        """Broadcast coordinate arrays of full shape (ij indexing)."""
        if self.dim == 1:
            return (self.axes[0],)
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True on the outermost layer, where hard-wall states vanish."""
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask

    def nearest_index(self, point) -> tuple[int, ...]:
        """Index of the node closest to `point` (clipped to the box)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise ValueError(
                f"point has {point.shape[0]} coordinates, grid is {self.dim}D"
            )
        idx = []
        for axis, x in enumerate(point):
            n = self.shape[axis]
            i = int(round(x / self.spacing)) + (n - 1) // 2
            idx.append(min(max(i, 0), n - 1))
        return tuple(idx)


def build_grid(dim: int, spacing: float, half_extent) -> Grid:
    """Construct a symmetric uniform grid.

    `half_extent` is a single length or one per axis; it is trimmed down
    to an integer number of steps so the point count per axis is odd and
    the origin is a node.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if not (isinstance(spacing, (int, float)) and math.isfinite(spacing)) or spacing <= 0:
        raise ValueError(f"spacing must be a positive finite number, got {spacing!r}")
    extents = np.atleast_1d(np.asarray(half_extent, dtype=float))
    if extents.size == 1:
        extents = np.repeat(extents, dim)
    if extents.size != dim:
        raise ValueError(
            f"half_extent needs 1 or {dim} values, got {extents.size}"
        )
    shape = []
    realized = []
    for L in extents:
        if not math.isfinite(L) or L < 4 * spacing:
            raise ValueError(
                f"half_extent {L!r} too small: need at least 4*spacing = {4 * spacing}"
            )
        half_steps = int(math.floor(L / spacing + 1e-9))
        shape.append(2 * half_steps + 1)
        realized.append(half_steps * spacing)
    if dim == 2 and max(shape) > _MAX_POINTS_2D:
        raise ValueError(
            f"{max(shape)} points per axis exceeds {_MAX_POINTS_2D}; "
            "use a coarser spacing"
        )
    return Grid(dim=dim, spacing=float(spacing),
                half_extents=tuple(realized), shape=tuple(shape))


def _check_values(grid: Grid, values: np.ndarray, dtype) -> np.ndarray:
    values = np.asarray(values, dtype=dtype)
    if values.shape != grid.shape:
        raise ValueError(
            f"values shape {values.shape} does not match grid shape {grid.shape}"
        )
    return values


@dataclass
class ComplexField:
    """One complex amplitude per grid point."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, np.complex128)

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy())


@dataclass
class RealField:
    """One real value per grid point (potentials, densities)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, np.float64)

    def copy(self) -> "RealField":
        return RealField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """One real dim-vector per grid point, component-major layout."""

    grid: Grid
    values: np.ndarray  # shape (dim, *grid.shape)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expected = (self.grid.dim,) + self.grid.shape
        if values.shape != expected:
            raise ValueError(
                f"vector values shape {values.shape}, expected {expected}"
            )
        self.values = values


def _same_grid(a, b) -> Grid:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return a.grid


def inner_product(a: ComplexField, b: ComplexField) -> complex:
    """<a|b> = sum conj(a) * b * h^dim, conjugate-linear in `a`.

    numpy's pairwise reduction keeps the evaluation order deterministic,
    so repeated calls are bit-identical.
    """
    g = _same_grid(a, b)
    return complex(np.vdot(a.values, b.values) * g.quadrature_weight)


def norm(a: ComplexField) -> float:
    return math.sqrt(max(inner_product(a, a).real, 0.0))


def normalized(a: ComplexField) -> ComplexField:
    """Scale to unit L2 norm; a zero field has no direction to keep."""
    n = norm(a)
    if n == 0.0:
        raise ValueError("cannot normalize a zero field")
    return ComplexField(a.grid, a.values / n)


def _diff1(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order first derivative: central inside, one-sided at the edge."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    out[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    out[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    out[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def _lap_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order second derivative along one axis, zero beyond the edge."""
    v = np.moveaxis(values, axis, 0)
    p = np.zeros((v.shape[0] + 4,) + v.shape[1:], dtype=v.dtype)
    p[2:-2] = v
    out = (-p[:-4] + 16 * p[1:-3] - 30 * p[2:-2] + 16 * p[3:-1] - p[4:]) / (12 * h * h)
    return np.moveaxis(out, 0, axis)


def gradient(f):
    """Per-axis first derivatives of a field, returned as a tuple."""
    cls = type(f)
    return tuple(
        cls(f.grid, _diff1(f.values, f.grid.spacing, axis))
        for axis in range(f.grid.dim)
    )


def laplacian(f):
    """Sum of per-axis second derivatives.

    Values beyond the box edge count as zero, which matches the hard-wall
    boundary and makes the operator symmetric:
    <a|lap b> == <lap a|b> for any fields, boundary-vanishing or not.
    """
    values = _lap_axis(f.values, f.grid.spacing, 0)
    for axis in range(1, f.grid.dim):
        values = values + _lap_axis(f.values, f.grid.spacing, axis)
    return type(f)(f.grid, values)


def divergence(v: VectorField) -> RealField:
    """Sum of per-axis derivatives of the components of a vector field."""
    g = v.grid
    values = _diff1(v.values[0], g.spacing, 0)
    for axis in range(1, g.dim):
        values = values + _diff1(v.values[axis], g.spacing, axis)
    return RealField(g, values)
