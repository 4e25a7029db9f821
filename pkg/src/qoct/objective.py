"""Control functionals and the terminal condition of the adjoint state.

The merit of a run is J = O1 + O2 + F with

    O1 = -int (sqrt(n) - sqrt(n_tg))^2 dr      density match, in [-2, 0]
    O2 = -w_c int |j|^2 dr                      current suppression
    F  = -int alpha(t) eps(t)^2 dt              fluence penalty

alpha(t) = 1/2 * {erf(t - T/20) - erf(t - T + T/20)}^-1 sits at 1/4 over
the bulk of the pulse and diverges at both ends, which forces the field
to switch on and off smoothly; it is clamped at 1e8.  The mapped overlap
1 + O1/2 = int sqrt(n * n_tg) reads as a fidelity in [0, 1].

Backward propagation starts from

    chi(T) = psi sqrt(n_tg/n) + 2i w_c (j . grad) psi + i w_c psi (div j)

which is the functional derivative of the target terms with respect to
conj(psi) at final time (the density ratio is floored to avoid 0/0 in
empty regions; the norm-conserving part, which cannot influence the
field equation, is dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .grid import ComplexField, RealField, VectorField, divergence, gradient
from .observables import current, density

__all__ = [
    "ALPHA_MAX",
    "DENSITY_FLOOR",
    "TargetSpec",
    "FunctionalBreakdown",
    "alpha",
    "fluence_penalty",
    "o1_density_overlap",
    "o2_current",
    "evaluate_J",
    "chi_terminal",
]

ALPHA_MAX = 1e8
DENSITY_FLOOR = 1e-12


@dataclass(frozen=True)
class TargetSpec:
    """What the control run aims at: a density, and how much current hurts."""

    n_tg: RealField
    w_c: float

    def __post_init__(self):
        if not math.isfinite(self.w_c) or self.w_c < 0:
            raise ValueError(f"w_c must be nonnegative, got {self.w_c!r}")
        total = float(self.n_tg.values.sum()) * self.n_tg.grid.quadrature_weight
        if abs(total - 1.0) > 1e-8:
            raise ValueError(
                f"target density integrates to {total:.12f}, must be 1 within 1e-8"
            )
        if float(self.n_tg.values.min()) < -1e-12:
            raise ValueError("target density has negative values")


@dataclass(frozen=True)
class FunctionalBreakdown:
    """J and its pieces for one candidate (state, field) pair."""

    O1: float
    O2: float
    F_penalty: float
    J: float
    overlap_mapped: float


def alpha(t, total_time: float):
    """Fluence weight at time t; scalar in, scalar out (arrays pass through).

    1/4 over the plateau, clamped at ALPHA_MAX inside the switching
    margins of width ~T/20 at both ends.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > total_time):
        raise ValueError(f"t must lie in [0, {total_time}]")
    margin = total_time / 20.0
    gap = erf(t_arr - margin) - erf(t_arr - (total_time - margin))
    out = 0.5 / np.maximum(gap, 0.5 / ALPHA_MAX)
    return float(out) if np.isscalar(t) else out


def fluence_penalty(field) -> float:
    """-int alpha(t) eps(t)^2 dt by the trapezoid rule on the field mesh."""
    samples = np.asarray(field.samples, dtype=float)
    mesh = field.mesh
    weights = alpha(mesh.times(), mesh.total_time)
    return -float(np.trapezoid(weights * samples**2, dx=mesh.dt))


def _sqrt_clipped(n: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(n, 0.0, None))


def o1_density_overlap(n: RealField, spec: TargetSpec) -> float:
    """-int (sqrt n - sqrt n_tg)^2; 0 at a perfect match, -2 when disjoint."""
    if n.grid != spec.n_tg.grid:
        raise ValueError("density and target live on different grids")
    diff = _sqrt_clipped(n.values) - _sqrt_clipped(spec.n_tg.values)
    return -float(np.sum(diff * diff)) * n.grid.quadrature_weight


def o2_current(j: VectorField, w_c: float) -> float:
    """-w_c int |j|^2; the standstill penalty."""
    if not math.isfinite(w_c) or w_c < 0:
        raise ValueError(f"w_c must be nonnegative, got {w_c!r}")
    return -w_c * float(np.sum(j.values * j.values)) * j.grid.quadrature_weight


def evaluate_J(psi_T: ComplexField, field, spec: TargetSpec) -> FunctionalBreakdown:
    """Full merit of a final state and the field that produced it."""
    n = density(psi_T)
    o1 = o1_density_overlap(n, spec)
    o2 = o2_current(current(psi_T), spec.w_c)
    fp = fluence_penalty(field)
    return FunctionalBreakdown(
        O1=o1, O2=o2, F_penalty=fp, J=o1 + o2 + fp,
        overlap_mapped=1.0 + 0.5 * o1,
    )


def chi_terminal(psi_T: ComplexField, spec: TargetSpec) -> ComplexField:
    """Adjoint state at final time for the combined density/current target."""
    grid = psi_T.grid
    if grid != spec.n_tg.grid:
        raise ValueError("state and target live on different grids")
    n = density(psi_T).values
    ratio = np.sqrt(spec.n_tg.values / np.maximum(n, DENSITY_FLOOR))
    values = ratio.astype(np.complex128) * psi_T.values
    if spec.w_c != 0.0:
        j = current(psi_T)
        grads = gradient(psi_T)
        advect = sum(j.values[a] * grads[a].values for a in range(grid.dim))
        values = values + 2j * spec.w_c * advect \
            + 1j * spec.w_c * psi_T.values * divergence(j).values
    return ComplexField(grid, values)
