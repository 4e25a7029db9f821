"""Bound states via imaginary-time relaxation.

Repeated damped Cayley steps act as a rational filter of the discrete
Hamiltonian; Gram-Schmidt deflation against already-converged states
after every step walks the solver up the spectrum.  Because the filter
is an exact rational function of the same discrete operator the
propagator uses, its fixed points are exact eigenvectors, not
dtau-biased approximations.  A final Rayleigh-Ritz rotation cleans up
slow mixing between close-lying states, and exactly degenerate pairs
(e.g. the two p-like states of a radially symmetric potential) are
disentangled by diagonalizing the mirror operator inside each cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .grid import ComplexField, Grid, RealField
from .model import apply_hamiltonian
from .propagator import Propagator

__all__ = [
    "EigenPair",
    "lowest_states",
    "superposition_density",
    "select_by_symmetry",
    "mirror_parity",
]

_PARITY_TOL = 1e-6


@dataclass
class EigenPair:
    """Converged eigenstate with its energy and residual norm."""

    energy: float
    state: ComplexField
    residual: float


def _seed_ladder(grid: Grid, count: int) -> list[np.ndarray]:
    """Deterministic starting guesses: Gaussian times low monomials."""
    sigmas = [max(L / 4.0, 2.0 * grid.spacing) for L in grid.half_extents]
    bump = np.exp(-0.5 * (grid.meshes[0] / sigmas[0]) ** 2)
    for a in range(1, grid.dim):
        bump = bump * np.exp(-0.5 * (grid.meshes[a] / sigmas[a]) ** 2)
    powers: list[tuple[int, ...]] = []
    degree = 0
    while len(powers) < count:
        if grid.dim == 1:
            powers.append((degree,))
        else:
            powers.extend((degree - q, q) for q in range(degree + 1))
        degree += 1
    seeds = []
    for p in powers[:count]:
        factor = (grid.meshes[0] / sigmas[0]) ** p[0]
        if grid.dim == 2 and p[1]:
            factor = factor * (grid.meshes[1] / sigmas[1]) ** p[1]
        v = (bump * factor).astype(np.complex128)
        v[grid.boundary_mask] = 0.0
        seeds.append(v)
    return seeds


def _default_dtau(grid: Grid, V: RealField) -> float:
    # kinetic cutoff of the 4th-order stencil is 16/(3 h^2) per axis
    lam_max = grid.dim * 8.0 / (3.0 * grid.spacing**2) + max(float(V.values.max()), 0.0)
    e_scale = max(1.0, abs(float(V.values.min())))
    return 1.0 / math.sqrt(lam_max * e_scale)


def lowest_states(V: RealField, k: int, *, dtau: float | None = None,
                  residual_tol: float = 1e-8,
                  max_steps: int = 200_000) -> list[EigenPair]:
    """The k lowest eigenpairs of H0 = -laplacian/2 + V, energy ordered.

    Orthonormal within 1e-10, residual norm below `residual_tol`.  The
    caller is responsible for asking only for states the box actually
    binds.  Raises RuntimeError if relaxation stalls.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    grid = V.grid
    if dtau is None:
        dtau = _default_dtau(grid, V)
    engine = Propagator(grid, V)
    w = grid.quadrature_weight

    def dot(a, b):
        return np.vdot(a, b) * w

    def orthogonalize(v, basis):
        for _ in range(2):
            for b in basis:
                v = v - dot(b, v) * b
        return v

    def normalize(v):
        nrm = math.sqrt(dot(v, v).real)
        if nrm < 1e-12:
            raise RuntimeError("deflation annihilated the relaxation state")
        return v / nrm

    def h_apply(v):
        return apply_hamiltonian(ComplexField(grid, v), V).values

    def residual_of(v):
        hv = h_apply(v)
        e = dot(v, hv).real
        r = hv - e * v
        return e, math.sqrt(dot(r, r).real)

    seeds = _seed_ladder(grid, k + 8)
    basis: list[np.ndarray] = []
    seed_at = 0
    for _ in range(k):
        v = None
        while seed_at < len(seeds):
            cand = orthogonalize(seeds[seed_at], basis)
            seed_at += 1
            if math.sqrt(dot(cand, cand).real) > 1e-6:
                v = normalize(cand)
                break
        if v is None:
            raise RuntimeError("ran out of independent seed states")
        converged = False
        for it in range(max_steps):
            v = engine.step_values(v, 0.0, -1j * dtau)
            v = normalize(orthogonalize(v, basis))
            if (it + 1) % 16 == 0:
                _, res = residual_of(v)
                if res <= residual_tol:
                    converged = True
                    break
        if not converged:
            _, res = residual_of(v)
            if res > residual_tol:
                raise RuntimeError(
                    f"imaginary-time relaxation stalled at residual {res:.3e} "
                    f"(tolerance {residual_tol:.1e}) after {max_steps} steps"
                )
        basis.append(v)

    basis = _ritz_rotate(basis, h_apply, dot)
    basis = _split_degenerate(basis, V, h_apply, dot)
    pairs = []
    for v in basis:
        v = _fix_phase(v)
        e, res = residual_of(v)
        pairs.append(EigenPair(energy=float(e),
                               state=ComplexField(grid, v),
                               residual=float(res)))
    pairs.sort(key=lambda p: p.energy)
    return pairs


def _ritz_rotate(basis, h_apply, dot):
    """Rayleigh-Ritz in the converged span; optimal linear combinations."""
    m = len(basis)
    if m == 1:
        return basis
    hv = [h_apply(v) for v in basis]
    a = np.empty((m, m), dtype=complex)
    s = np.empty((m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            a[i, j] = dot(basis[i], hv[j])
            s[i, j] = dot(basis[i], basis[j])
    _, u = eigh(a, s)
    return [sum(u[j, col] * basis[j] for j in range(m)) for col in range(m)]


def _split_degenerate(basis, V: RealField, h_apply, dot):
    """Rotate degenerate clusters onto mirror eigenstates.

    Only axes along which the potential itself is mirror-symmetric are
    used, so the rotation commutes with H0 and costs no residual.
    """
    grid = V.grid
    sym_axes = [
        a for a in range(grid.dim)
        if np.max(np.abs(V.values - np.flip(V.values, axis=a)))
        <= 1e-12 * (1.0 + np.max(np.abs(V.values)))
    ]
    if not sym_axes:
        return basis
    energies = [dot(v, h_apply(v)).real for v in basis]
    out = list(basis)
    i = 0
    while i < len(out):
        j = i + 1
        while j < len(out) and abs(energies[j] - energies[i]) \
                <= 1e-7 * max(1.0, abs(energies[i])):
            j += 1
        if j - i > 1:
            cluster = out[i:j]
            for axis in sym_axes:
                mirrored = [np.flip(v, axis=axis) for v in cluster]
                p = np.empty((len(cluster),) * 2, dtype=complex)
                for r in range(len(cluster)):
                    for c in range(len(cluster)):
                        p[r, c] = dot(cluster[r], mirrored[c])
                _, u = eigh(0.5 * (p + p.conj().T))
                cluster = [
                    sum(u[r, col] * cluster[r] for r in range(len(cluster)))
                    for col in range(len(cluster))
                ]
            # deterministic order inside the cluster: +1 parity first
            cluster.sort(
                key=lambda v: tuple(
                    -round(np.vdot(v, np.flip(v, axis=a)).real
                           * V.grid.quadrature_weight, 6)
                    for a in sym_axes
                )
            )
            out[i:j] = cluster
        i = j
    return out


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude amplitude real and positive."""
    idx = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    pivot = v[idx]
    if pivot == 0:
        return v
    return v * (abs(pivot) / pivot)


def mirror_parity(psi: ComplexField, axis: int) -> float:
    """<psi | psi mirrored along axis>; +-1 for definite-parity states."""
    if axis < 0 or axis >= psi.grid.dim:
        raise ValueError(f"axis {axis} out of range for {psi.grid.dim}D grid")
    return float(
        (np.vdot(psi.values, np.flip(psi.values, axis=axis))
         * psi.grid.quadrature_weight).real
    )


def superposition_density(states: list[ComplexField], coeffs) -> RealField:
    """Normalized density of sum_i c_i psi_i over orthonormal states."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if len(states) == 0 or coeffs.shape != (len(states),):
        raise ValueError(
            f"{len(states)} states with {coeffs.size} coefficients"
        )
    total = float(np.sum(np.abs(coeffs) ** 2))
    if abs(total - 1.0) > 1e-8:
        raise ValueError(
            f"coefficient norm is {total:.12f}, must be 1 within 1e-8"
        )
    grid = states[0].grid
    w = grid.quadrature_weight
    for a in states:
        if a.grid != grid:
            raise ValueError("superposition states live on different grids")
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            ov = np.vdot(a.values, b.values) * w
            expect = 1.0 if i == j else 0.0
            if abs(ov - expect) > 1e-8:
                raise ValueError(
                    f"states {i} and {j} are not orthonormal: <i|j> = {ov:.3e}"
                )
    psi = sum(c * s.values for c, s in zip(coeffs, states))
    n = np.abs(psi) ** 2
    n /= n.sum() * w
    return RealField(grid, n)


def select_by_symmetry(pairs: list[EigenPair], parity_x: int | None = None,
                       parity_y: int | None = None) -> EigenPair:
    """Lowest pair whose state matches the requested mirror parities."""
    if not pairs:
        raise ValueError("no eigenpairs to select from")
    dim = pairs[0].state.grid.dim
    if parity_y is not None and dim == 1:
        raise ValueError("parity_y requested on a 1-dimensional grid")
    wanted = [(0, parity_x), (1, parity_y)]
    wanted = [(a, p) for a, p in wanted if p is not None]
    if not wanted:
        raise ValueError("no parity requested along any axis")
    for a, p in wanted:
        if p not in (-1, 1):
            raise ValueError(f"parity along axis {a} must be +1 or -1, got {p}")
    seen = []
    for pair in sorted(pairs, key=lambda p: p.energy):
        parities = {a: mirror_parity(pair.state, a) for a, _ in wanted}
        if all(abs(parities[a] - p) <= _PARITY_TOL for a, p in wanted):
            return pair
        seen.append(parities)
    raise ValueError(
        "no state matches the requested parity signature; "
        f"computed parities per state: {seen}"
    )
