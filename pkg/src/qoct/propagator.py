"""Unitary, time-reversible propagation of grid wavefunctions.

One step advances psi by the Cayley (Crank-Nicolson) form
(1 + i dt H/2)^-1 (1 - i dt H/2) with the field frozen at the step
midpoint value.  In 1D the full Hamiltonian sits inside one banded
solve, which is the exact implicit midpoint rule.  In 2D the step is
the symmetric composition

    phase(dt/2) . Cayley_x(dt) . Cayley_y(dt) . phase(dt/2)

where the per-axis factors carry the kinetic stencil plus any separable
potential part (detected automatically) and the diagonal phase carries
the rest (dipole drive, non-separable potential).  Every factor is
unitary and inverts exactly under dt -> -dt, so norm conservation and
reversibility hold to solver roundoff rather than to a tolerance.  For
a non-separable potential with zero field the step instead uses one
sparse factorization of the full operator, so stationary states stay
stationary there too; the factorization is cached and reused.

Imaginary time (t -> -i tau) turns the same Cayley step into a rational
filter of the discrete Hamiltonian whose fixed points are exact
eigenvectors; the spectrum module builds on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack
from scipy import sparse
from scipy.sparse.linalg import splu

from .grid import ComplexField, Grid, RealField
from .model import DipoleOperator

__all__ = ["TimeMesh", "Propagator", "step", "propagate", "imaginary_step"]


@dataclass(frozen=True)
class TimeMesh:
    """Uniform time mesh with steps+1 nodes covering [0, dt*steps]."""

    dt: float
    steps: int

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt)) \
                or self.dt <= 0:
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def total_time(self) -> float:
        return self.dt * self.steps

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


def _axis_band(n: int, h: float, v_diag: np.ndarray | None):
    """Banded (offsets 0,1,2) storage of the hard-wall 1D Hamiltonian.

    Returns (d0, d1, d2): diagonal, first and second superdiagonal of
    -laplacian/2 + diag(v_diag) with row/column 0 and n-1 of the kinetic
    part zeroed (wall).  The matrix is symmetric, so subdiagonals repeat.
    """
    k = 1.0 / (24.0 * h * h)
    d0 = np.full(n, 30.0 * k)
    d0[0] = d0[-1] = 0.0
    if v_diag is not None:
        d0 = d0 + v_diag
    d1 = np.full(n - 1, -16.0 * k)
    d1[0] = d1[-1] = 0.0
    d2 = np.full(n - 2, k)
    d2[0] = d2[-1] = 0.0
    return d0, d1, d2


def _band_matvec(bands, v: np.ndarray) -> np.ndarray:
    d0, d1, d2 = bands
    shape = (-1,) + (1,) * (v.ndim - 1)
    out = d0.reshape(shape) * v
    out[:-1] += d1.reshape(shape) * v[1:]
    out[1:] += d1.reshape(shape) * v[:-1]
    out[:-2] += d2.reshape(shape) * v[2:]
    out[2:] += d2.reshape(shape) * v[:-2]
    return out


class _BandedCayley:
    """(1 + c H)^-1 (1 - c H) for a banded axis Hamiltonian."""

    def __init__(self, bands, c: complex):
        d0, d1, d2 = bands
        n = d0.size
        self.c = c
        self.bands = bands
        ab = np.zeros((7, n), dtype=np.complex128)
        ab[2, 2:] = c * d2
        ab[3, 1:] = c * d1
        ab[4, :] = 1.0 + c * d0
        ab[5, :-1] = c * d1
        ab[6, :-2] = c * d2
        lu, piv, info = lapack.zgbtrf(ab, 2, 2)
        if info != 0:
            raise RuntimeError(
                f"linear solve setup failed (gbtrf info={info}); "
                "the time step is too large for this grid"
            )
        self._lu = lu
        self._piv = piv

    def apply(self, v: np.ndarray) -> np.ndarray:
        rhs = v - self.c * _band_matvec(self.bands, v)
        flat = rhs.reshape(rhs.shape[0], -1)
        x, info = lapack.zgbtrs(self._lu, 2, 2, flat, self._piv)
        if info != 0:
            raise RuntimeError(f"linear solve failed (gbtrs info={info})")
        return np.ascontiguousarray(x).reshape(v.shape)


class _SparseCayley:
    """Exact Cayley step of the full 2D Hamiltonian (field-free use)."""

    def __init__(self, grid: Grid, v_flat: np.ndarray, c: complex):
        nx, ny = grid.shape
        h = grid.spacing
        bx = _axis_band(nx, h, None)
        by = _axis_band(ny, h, None)

        def axis_matrix(bands, n):
            d0, d1, d2 = bands
            return sparse.diags(
                [d2, d1, d0, d1, d2], [-2, -1, 0, 1, 2], shape=(n, n)
            )

        h0 = (
            sparse.kron(axis_matrix(bx, nx), sparse.identity(ny))
            + sparse.kron(sparse.identity(nx), axis_matrix(by, ny))
            + sparse.diags(v_flat)
        )
        eye = sparse.identity(nx * ny)
        self._numerator = (eye - c * h0).tocsr()
        self._lu = splu((eye + c * h0).tocsc())
        self._shape = grid.shape

    def apply(self, v: np.ndarray) -> np.ndarray:
        x = self._lu.solve(self._numerator @ v.ravel())
        return x.reshape(self._shape)


def _is_separable(v: np.ndarray) -> bool:
    i0 = v.shape[0] // 2
    j0 = v.shape[1] // 2
    rebuilt = v[:, j0][:, None] + v[i0, :][None, :] - v[i0, j0]
    scale = 1.0 + float(np.max(np.abs(v)))
    return float(np.max(np.abs(v - rebuilt))) <= 1e-12 * scale


class Propagator:
    """Stepping engine bound to one grid, potential and polarization.

    Holds the banded factorizations and reuses them across steps; both
    real and imaginary time run through the same Cayley machinery via a
    complex step parameter.
    """

    def __init__(self, grid: Grid, V: RealField,
                 mu: DipoleOperator | None = None):
        if V.grid != grid:
            raise ValueError("potential grid does not match")
        if mu is not None and mu.dim != grid.dim:
            raise ValueError("dipole dimension does not match the grid")
        self.grid = grid
        self.V = V
        self.mu_values = mu.on_grid(grid).values if mu is not None else None
        h = grid.spacing
        if grid.dim == 1:
            self._bands_full = _axis_band(grid.shape[0], h, V.values)
            self._v_residual = None
        else:
            v = V.values
            if _is_separable(v):
                i0, j0 = v.shape[0] // 2, v.shape[1] // 2
                vx = v[:, j0] - v[i0, j0]
                vy = v[i0, :]
                self._bands_x = _axis_band(grid.shape[0], h, vx)
                self._bands_y = _axis_band(grid.shape[1], h, vy)
                self._v_residual = None
            else:
                self._bands_x = _axis_band(grid.shape[0], h, None)
                self._bands_y = _axis_band(grid.shape[1], h, None)
                self._v_residual = v
        self._cayley_cache: dict = {}

    def _axis_cayley(self, key, bands, c) -> _BandedCayley:
        entry = self._cayley_cache.get((key, c))
        if entry is None:
            entry = _BandedCayley(bands, c)
            self._cayley_cache[(key, c)] = entry
        return entry

    def _sparse_cayley(self, c) -> _SparseCayley:
        entry = self._cayley_cache.get(("full", c))
        if entry is None:
            entry = _SparseCayley(self.grid, self._v_residual.ravel(), c)
            self._cayley_cache[("full", c)] = entry
        return entry

    def step_values(self, values: np.ndarray, eps_mid: float,
                    dt: complex) -> np.ndarray:
        """One Cayley step of the raw value array; dt may be complex."""
        c = 0.5j * dt
        if eps_mid != 0.0 and self.mu_values is None:
            raise ValueError("nonzero field needs a dipole operator")
        if self.grid.dim == 1:
            if eps_mid == 0.0:
                return self._axis_cayley("x", self._bands_full, c).apply(values)
            # the field enters the diagonal, so the LU cannot be reused
            bands = _axis_band(self.grid.shape[0], self.grid.spacing,
                               self.V.values - eps_mid * self.mu_values)
            return _BandedCayley(bands, c).apply(values)
        if self._v_residual is not None and eps_mid == 0.0:
            # non-separable potential, no drive: one exact solve keeps
            # eigenstates of the full operator stationary
            return self._sparse_cayley(c).apply(values)
        # diagonal part that the axis factors do not carry
        w = self._v_residual
        if eps_mid != 0.0:
            drive = -eps_mid * self.mu_values
            w = drive if w is None else w + drive
        out = values
        if w is not None:
            phase = np.exp(-c * w)  # equals exp(-i dt w / 2)
            out = phase * out
        out = self._axis_cayley("x", self._bands_x, c).apply(out)
        out = np.ascontiguousarray(out.T)
        out = self._axis_cayley("y", self._bands_y, c).apply(out)
        out = np.ascontiguousarray(out.T)
        if w is not None:
            out = phase * out
        return out

    def step(self, psi: ComplexField, eps_mid: float,
             dt_signed: float) -> ComplexField:
        if not math.isfinite(eps_mid):
            raise ValueError(f"field value is not finite: {eps_mid!r}")
        if not math.isfinite(dt_signed) or dt_signed == 0.0:
            raise ValueError(f"dt must be finite and nonzero, got {dt_signed!r}")
        return ComplexField(self.grid,
                            self.step_values(psi.values, eps_mid, dt_signed))

    def run_samples(self, values: np.ndarray, samples: np.ndarray, dt: float,
                    direction: str, midpoint: str = "average",
                    observer=None) -> np.ndarray:
        """Sweep over a stored field series.

        midpoint='average' uses (s[i]+s[i+1])/2 per step; 'lower' and
        'upper' freeze the sample at the step's earlier/later node, the
        conventions the optimizer sweeps generate fields with.
        """
        steps = samples.size - 1
        if direction == "forward":
            order = range(steps)
            signed_dt = dt
        elif direction == "backward":
            order = range(steps - 1, -1, -1)
            signed_dt = -dt
        else:
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        for i in order:
            if midpoint == "average":
                eps = 0.5 * (samples[i] + samples[i + 1])
            elif midpoint == "lower":
                eps = samples[i]
            elif midpoint == "upper":
                eps = samples[i + 1]
            else:
                raise ValueError(f"unknown midpoint rule {midpoint!r}")
            values = self.step_values(values, float(eps), signed_dt)
            if observer is not None:
                done = i + 1 if direction == "forward" else steps - i
                t = (i + 1) * dt if direction == "forward" else i * dt
                observer(done, t, ComplexField(self.grid, values))
        return values


def step(psi: ComplexField, V: RealField, mu: DipoleOperator | None,
         eps_mid: float, dt_signed: float) -> ComplexField:
    """Single step; builds a throwaway engine, fine outside hot loops."""
    return Propagator(psi.grid, V, mu).step(psi, eps_mid, dt_signed)


def propagate(psi0: ComplexField, V: RealField, field,
              direction: str = "forward", observer=None) -> ComplexField:
    """Drive psi0 across the whole mesh of a control field.

    `field` provides samples (one per mesh node), mesh and dipole; each
    step uses the average of its two node samples, so re-running with
    direction reversed undoes the sweep exactly.  The observer, when
    given, is called once per completed step with (index, time, psi).
    """
    samples = np.asarray(field.samples, dtype=float)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise ValueError(f"field sample {bad} is not finite")
    if samples.size != field.mesh.steps + 1:
        raise ValueError(
            f"field has {samples.size} samples for {field.mesh.steps} steps"
        )
    engine = Propagator(psi0.grid, V, field.dipole)
    values = engine.run_samples(psi0.values.copy(), samples, field.mesh.dt,
                                direction, observer=observer)
    if not np.all(np.isfinite(values)):
        raise RuntimeError("propagation produced non-finite amplitudes")
    return ComplexField(psi0.grid, values)


def imaginary_step(psi: ComplexField, V: RealField, dtau: float) -> ComplexField:
    """One damped step exp(-H dtau) in Cayley form, renormalized.

    Acts as a rational filter (1 - dtau E/2)/(1 + dtau E/2) on each
    eigencomponent: monotone in energy provided the discrete spectrum
    stays inside (-2/dtau, 2/dtau), which bounds dtau by the kinetic
    cutoff ~ dim * 16/(3 h^2) / 2; larger dtau still converges to the
    ground state whenever that state dominates the filter.
    """
    if dtau <= 0 or not math.isfinite(dtau):
        raise ValueError(f"dtau must be positive and finite, got {dtau!r}")
    out = Propagator(psi.grid, V).step_values(psi.values, 0.0, -1j * dtau)
    w = psi.grid.quadrature_weight
    nrm = math.sqrt(float(np.vdot(out, out).real) * w)
    if nrm == 0.0 or not math.isfinite(nrm):
        raise RuntimeError("imaginary-time step annihilated the state")
    return ComplexField(psi.grid, out / nrm)
