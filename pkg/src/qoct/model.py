"""Physical model: potentials, dipole coupling, Hamiltonian application.

The Hamiltonian is H(t) = H0 - mu * eps(t) with H0 = -laplacian/2 + V in
atomic units (length-gauge dipole coupling along a fixed polarization).
The kinetic part is projected onto the hard-wall interior, so states that
vanish on the outermost grid layer stay confined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .grid import ComplexField, Grid, RealField, inner_product, laplacian

__all__ = [
    "Potential",
    "DipoleOperator",
    "POTENTIAL_KINDS",
    "potential_eval",
    "potential_field",
    "apply_hamiltonian",
    "dipole_expectation",
]

POTENTIAL_KINDS = ("well_1d", "well_2d", "soft_coulomb_2d", "custom_polynomial")


def _well_profile(x):
    # quartic double well with asymmetric cubic tilt
    return x**4 / 64.0 + x**3 / 256.0 - x**2 / 4.0


@dataclass(frozen=True)
class Potential:
    """External potential, selected by kind.

    kind:
        well_1d          x^4/64 + x^3/256 - x^2/4
        well_2d          the 1D well along x plus a harmonic y^2/2 valley
        soft_coulomb_2d  -1/sqrt(1 + x^2 + y^2)
        custom_polynomial  polynomial in x (plus an optional separate
                           polynomial in y), coefficients low order first
    """

    kind: str
    x_coefficients: tuple[float, ...] = field(default=())
    y_coefficients: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(
                f"unknown potential kind {self.kind!r}; expected one of "
                f"{', '.join(POTENTIAL_KINDS)}"
            )
        if self.kind == "custom_polynomial" and not self.x_coefficients:
            raise ValueError("custom_polynomial needs x_coefficients")
        if self.kind != "custom_polynomial" and (
            self.x_coefficients or self.y_coefficients
        ):
            raise ValueError(f"{self.kind} takes no polynomial coefficients")
        object.__setattr__(self, "x_coefficients",
                           tuple(float(c) for c in self.x_coefficients))
        object.__setattr__(self, "y_coefficients",
                           tuple(float(c) for c in self.y_coefficients))

    @property
    def dim(self) -> int:
        if self.kind == "well_1d":
            return 1
        if self.kind in ("well_2d", "soft_coulomb_2d"):
            return 2
        return 2 if self.y_coefficients else 1

    def evaluate(self, *coords: float) -> float:
        if len(coords) != self.dim:
            raise ValueError(
                f"{self.kind} is {self.dim}D, got {len(coords)} coordinates"
            )
        if self.kind == "well_1d":
            return float(_well_profile(coords[0]))
        if self.kind == "well_2d":
            return float(_well_profile(coords[0]) + 0.5 * coords[1] ** 2)
        if self.kind == "soft_coulomb_2d":
            return float(-1.0 / math.sqrt(1.0 + coords[0] ** 2 + coords[1] ** 2))
        value = float(npoly.polyval(coords[0], self.x_coefficients))
        if self.y_coefficients:
            value += float(npoly.polyval(coords[1], self.y_coefficients))
        return value

    def on_grid(self, grid: Grid) -> RealField:
        if grid.dim != self.dim:
            raise ValueError(f"{self.kind} is {self.dim}D, grid is {grid.dim}D")
        if self.kind == "well_1d":
            return RealField(grid, _well_profile(grid.meshes[0]))
        if self.kind == "well_2d":
            x, y = grid.meshes
            return RealField(grid, _well_profile(x) + 0.5 * y**2)
        if self.kind == "soft_coulomb_2d":
            x, y = grid.meshes
            return RealField(grid, -1.0 / np.sqrt(1.0 + x**2 + y**2))
        values = npoly.polyval(grid.meshes[0], self.x_coefficients)
        if self.y_coefficients:
            values = values + npoly.polyval(grid.meshes[1], self.y_coefficients)
        return RealField(grid, np.broadcast_to(values, grid.shape).copy())

@dataclass(frozen=True)
class DipoleOperator:
    """Position operator projected on a unit polarization vector."""

    polarization: tuple[float, ...]

    def __post_init__(self):
        pol = np.asarray(self.polarization, dtype=float)
        if pol.ndim != 1 or pol.size not in (1, 2):
            raise ValueError("polarization must have 1 or 2 components")
        length = float(np.linalg.norm(pol))
        if not math.isfinite(length) or length == 0.0:
            raise ValueError("polarization must be a finite nonzero vector")
        object.__setattr__(self, "polarization", tuple(pol / length))

    @property
    def dim(self) -> int:
        return len(self.polarization)

    def on_grid(self, grid: Grid) -> RealField:
        if grid.dim != self.dim:
            raise ValueError(
                f"polarization has {self.dim} components, grid is {grid.dim}D"
            )
        values = self.polarization[0] * grid.meshes[0]
        for a in range(1, grid.dim):
            values = values + self.polarization[a] * grid.meshes[a]
        return RealField(grid, values)


def potential_eval(potential: Potential, point) -> float:
    """Potential value at a single point (vectorized callers use on_grid)."""
    coords = np.atleast_1d(np.asarray(point, dtype=float))
    return potential.evaluate(*coords)


def potential_field(potential: Potential, grid: Grid) -> RealField:
    """Potential sampled on every grid node; compute once per run."""
    return potential.on_grid(grid)


def apply_hamiltonian(psi: ComplexField, V: RealField,
                      mu: DipoleOperator | None = None,
                      eps: float = 0.0) -> ComplexField:
    """(H0 - mu*eps) psi with the hard-wall kinetic projection.

    The boundary layer of psi is masked before and after the stencil, so
    the kinetic operator is the symmetric interior restriction; V and the
    dipole act pointwise.
    """
    if psi.grid != V.grid:
        raise ValueError("psi and V live on different grids")
    if eps != 0.0 and mu is None:
        raise ValueError("nonzero field needs a dipole operator")
    mask = psi.grid.boundary_mask
    inner = psi.values.copy()
    inner[mask] = 0.0
    kinetic = -0.5 * laplacian(ComplexField(psi.grid, inner)).values
    kinetic[mask] = 0.0
    w = V.values.copy()
    if eps != 0.0:
        w = w - eps * mu.on_grid(psi.grid).values
    return ComplexField(psi.grid, kinetic + w * psi.values)


def dipole_expectation(chi: ComplexField, psi: ComplexField,
                       mu: DipoleOperator) -> complex:
    """<chi| mu |psi>, the matrix element the field equation feeds on."""
    mu_vals = mu.on_grid(psi.grid).values
    return inner_product(chi, ComplexField(psi.grid, mu_vals * psi.values))
