"""Monotonic field iteration and post-pulse analysis.

Each iteration runs two sweeps.  Backward from T: the adjoint chi starts
at chi_terminal and descends under the freshly computed field
eps~(t) = -Im<chi|mu|psi>/alpha(t), while psi is co-propagated backward
under the previous field, reconstructing its trajectory by exact
reversibility instead of storing it.  Forward from 0: psi ascends under
the newly computed eps(t) from the same formula, while chi is
co-propagated under the stored eps~.  Memory therefore stays at two
states plus field time series regardless of horizon length.

Fields generated on the fly freeze the sample at the node where the
states currently sit (start of each step), so re-propagating under the
stored series with the matching edge convention reproduces the sweep
bit for bit.  The iterate with the best J is kept, not the last one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, RealField
from .model import DipoleOperator, dipole_expectation
from .objective import TargetSpec, alpha, chi_terminal, evaluate_J
from .propagator import Propagator, TimeMesh

__all__ = [
    "ControlField",
    "IterationRecord",
    "OptimizationResult",
    "StabilitySeries",
    "field_from_pair",
    "optimize",
    "stability_probe",
]


@dataclass
class ControlField:
    """Scalar field amplitude sampled on every node of a time mesh."""

    samples: np.ndarray
    mesh: TimeMesh
    dipole: DipoleOperator

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (self.mesh.steps + 1,):
            raise ValueError(
                f"{samples.size} samples for a mesh with {self.mesh.steps + 1} nodes"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("field samples must be finite")
        self.samples = samples

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    @classmethod
    def zero(cls, mesh: TimeMesh, dipole: DipoleOperator) -> "ControlField":
        return cls(np.zeros(mesh.steps + 1), mesh, dipole)

    @classmethod
    def sine_squared(cls, mesh: TimeMesh, dipole: DipoleOperator,
                     amplitude: float, frequency: float,
                     sign: float = 1.0) -> "ControlField":
        """sign * A * sin^2(pi t / T) * sin(omega t): smooth on, smooth off."""
        t = mesh.times()
        total = mesh.total_time
        samples = sign * amplitude * np.sin(np.pi * t / total) ** 2 \
            * np.sin(frequency * t)
        return cls(samples, mesh, dipole)


@dataclass(frozen=True)
class IterationRecord:
    index: int
    J: float
    O1: float
    O2: float
    F_penalty: float
    overlap_mapped: float
    max_abs_field: float


@dataclass
class OptimizationResult:
    history: list[IterationRecord]
    best_field: ControlField
    best_psi_T: ComplexField
    chi0: ComplexField | None
    converged: bool
    reason: str
    reconstruction_error: float = 0.0

    @property
    def best(self) -> IterationRecord:
        return max(self.history, key=lambda r: r.J)


def field_from_pair(chi: ComplexField, psi: ComplexField, mu: DipoleOperator,
                    t: float, total_time: float) -> float:
    """Field equation alpha(t) eps(t) = -Im <chi|mu|psi>, solved for eps."""
    return -dipole_expectation(chi, psi, mu).imag / alpha(t, total_time)


def _check_endpoints(samples: np.ndarray):
    peak = float(np.max(np.abs(samples)))
    if peak > 0.0 and max(abs(samples[0]), abs(samples[-1])) > 1e-4 * peak:
        raise ValueError(
            "field must switch on and off: endpoint samples exceed "
            "1e-4 of the peak amplitude"
        )


def optimize(initial_psi: ComplexField, V: RealField, guess: ControlField,
             target: TargetSpec, *, j_tol: float = 1e-6, max_iter: int = 200,
             observer=None) -> OptimizationResult:
    """Iterate the field equations until J stalls or max_iter is reached.

    Returns the best iterate seen (the guess itself competes), the last
    backward-sweep adjoint at t=0 for restarts, and the full per-iteration
    history of J and its pieces.
    """
    grid = initial_psi.grid
    if V.grid != grid or target.n_tg.grid != grid:
        raise ValueError("state, potential and target must share one grid")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    if j_tol <= 0:
        raise ValueError(f"j_tol must be positive, got {j_tol}")
    nrm = math.sqrt(
        float(np.vdot(initial_psi.values, initial_psi.values).real)
        * grid.quadrature_weight
    )
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"initial state norm is {nrm:.12f}, must be 1")
    _check_endpoints(guess.samples)

    mesh = guess.mesh
    dt = mesh.dt
    steps = mesh.steps
    total = mesh.total_time
    engine = Propagator(grid, V, guess.dipole)
    mu_vals = guess.dipole.on_grid(grid).values
    w = grid.quadrature_weight
    alphas = alpha(mesh.times(), total)

    def eps_of(chi_v, psi_v, node):
        return float(-(np.vdot(chi_v, mu_vals * psi_v) * w).imag / alphas[node])

    half = 0.5 * dt
    # alpha at the midpoint of interval [t_i, t_{i+1}], i = 0 .. steps-1
    mid_alphas = alpha((np.arange(steps) + 0.5) * dt, total)

    def solve_interval_field(feed_v, partner_half, alpha_mid, e_seed, half_dt,
                             feed_is_bra):
        # Root of alpha*e + Im<chi|mu|psi> with both states taken at the
        # interval midpoint; the feedback state is advanced half a step under
        # the trial field e itself.  The node-explicit update is unstable at
        # the mesh Nyquist frequency once dt*<mu^2> exceeds alpha, whereas
        # this midpoint form damps that mode for every dt.
        if feed_is_bra:
            def F(e):
                h = engine.step_values(feed_v, e, half_dt)
                return alpha_mid * e + float((np.vdot(h, mu_vals * partner_half) * w).imag)
        else:
            def F(e):
                h = engine.step_values(feed_v, e, half_dt)
                return alpha_mid * e + float((np.vdot(partner_half, mu_vals * h) * w).imag)
        e0 = e_seed
        f0 = F(e0)
        e1 = e0 - f0 / alpha_mid
        if e1 == e0:
            return e0
        f1 = F(e1)
        for _ in range(30):
            d = f1 - f0
            if d == 0.0:
                break
            e2 = e1 - f1 * (e1 - e0) / d
            if not math.isfinite(e2):
                break
            e0, f0 = e1, f1
            e1 = e2
            if abs(e1 - e0) <= 1e-12 * (1.0 + abs(e1)):
                return e1
            f1 = F(e1)
        if not math.isfinite(e1):
            raise RuntimeError("field self-consistency solve diverged")
        return e1

    def record_of(index, psi_T_vals, samples):
        fld = ControlField(samples, mesh, guess.dipole)
        b = evaluate_J(ComplexField(grid, psi_T_vals), fld, target)
        if not math.isfinite(b.J):
            raise RuntimeError(f"non-finite functional value at iteration {index}")
        return IterationRecord(index=index, J=b.J, O1=b.O1, O2=b.O2,
                               F_penalty=b.F_penalty,
                               overlap_mapped=b.overlap_mapped,
                               max_abs_field=float(np.max(np.abs(samples))))

    psi0_vals = initial_psi.values.copy()

    # iteration 0: the guess itself
    eps_prev = guess.samples.copy()
    psi_T_vals = engine.run_samples(psi0_vals.copy(), eps_prev, dt,
                                    "forward", midpoint="lower")
    history = [record_of(0, psi_T_vals, eps_prev)]
    if observer is not None:
        observer(history[0])
    best_idx = 0
    best_field_samples = eps_prev.copy()
    best_psi_T = psi_T_vals.copy()

    chi0_vals = None
    recon_worst = 0.0
    converged = False
    reason = "max_iter"
    for k in range(1, max_iter + 1):
        chi_v = chi_terminal(ComplexField(grid, psi_T_vals), target).values
        psi_v = psi_T_vals.copy()
        eps_tilde = np.empty(steps + 1)
        seed = 0.0
        for i in range(steps, 0, -1):
            e_old = float(eps_prev[i - 1])
            psi_h = engine.step_values(psi_v, e_old, -half)
            e = solve_interval_field(chi_v, psi_h, mid_alphas[i - 1], seed,
                                     -half, True)
            eps_tilde[i] = seed = e
            chi_v = engine.step_values(chi_v, e, -dt)
            psi_v = engine.step_values(psi_v, e_old, -dt)
        eps_tilde[0] = eps_of(chi_v, psi_v, 0)
        chi0_vals = chi_v.copy()
        recon = math.sqrt(
            float(np.sum(np.abs(psi_v - psi0_vals) ** 2)) * w
        )
        recon_worst = max(recon_worst, recon)

        psi_v = psi0_vals.copy()
        eps_new = np.empty(steps + 1)
        seed = 0.0
        for i in range(steps):
            e_adj = float(eps_tilde[i + 1])
            chi_h = engine.step_values(chi_v, e_adj, half)
            e = solve_interval_field(psi_v, chi_h, mid_alphas[i], seed,
                                     half, False)
            eps_new[i] = seed = e
            psi_v = engine.step_values(psi_v, e, dt)
            chi_v = engine.step_values(chi_v, e_adj, dt)
        eps_new[steps] = eps_of(chi_v, psi_v, steps)
        psi_T_vals = psi_v
        eps_prev = eps_new

        history.append(record_of(k, psi_T_vals, eps_new))
        if observer is not None:
            observer(history[-1])
        if history[-1].J > history[best_idx].J:
            best_idx = k
            best_field_samples = eps_new.copy()
            best_psi_T = psi_T_vals.copy()
        if abs(history[-1].J - history[-2].J) < j_tol:
            converged = True
            reason = "j_tol"
            break

    return OptimizationResult(
        history=history,
        best_field=ControlField(best_field_samples, mesh, guess.dipole),
        best_psi_T=ComplexField(grid, best_psi_T),
        chi0=ComplexField(grid, chi0_vals) if chi0_vals is not None else None,
        converged=converged,
        reason=reason,
        reconstruction_error=recon_worst,
    )


@dataclass
class StabilitySeries:
    """Field-free follow-up of a final state against its target."""

    times: np.ndarray
    overlap_mapped: np.ndarray
    points: tuple[tuple[float, ...], ...]
    density_diff: np.ndarray  # shape (len(points), len(times))


def stability_probe(psi_T: ComplexField, V: RealField, mesh: TimeMesh,
                    target: TargetSpec, monitor_points) -> StabilitySeries:
    """Propagate psi_T with the field off and watch the density hold still.

    Records 1 + O1/2 and n(r_m, t) - n_tg(r_m) at each requested monitor
    point (snapped to the nearest node) for every step including t=0.
    """
    grid = psi_T.grid
    if V.grid != grid or target.n_tg.grid != grid:
        raise ValueError("state, potential and target must share one grid")
    indices = []
    snapped = []
    for point in monitor_points:
        idx = grid.nearest_index(point)
        coords = tuple(float(grid.axes[a][idx[a]]) for a in range(grid.dim))
        requested = tuple(np.atleast_1d(np.asarray(point, dtype=float)))
        if any(abs(c - r) > 1e-9 for c, r in zip(coords, requested)):
            warnings.warn(
                f"monitor point {requested} snapped to grid node {coords}",
                stacklevel=2,
            )
        indices.append(idx)
        snapped.append(coords)

    w = grid.quadrature_weight
    sqrt_ntg = np.sqrt(np.clip(target.n_tg.values, 0.0, None))
    ntg_at = [float(target.n_tg.values[idx]) for idx in indices]

    engine = Propagator(grid, V)
    values = psi_T.values.copy()
    count = mesh.steps + 1
    overlap = np.empty(count)
    diffs = np.empty((len(indices), count))

    def sample(col, v):
        n = (v.conj() * v).real
        overlap[col] = float(np.sum(np.sqrt(n) * sqrt_ntg)) * w
        for row, idx in enumerate(indices):
            diffs[row, col] = float(n[idx]) - ntg_at[row]

    sample(0, values)
    for i in range(mesh.steps):
        values = engine.step_values(values, 0.0, mesh.dt)
        sample(i + 1, values)
    if not np.all(np.isfinite(values)):
        raise RuntimeError("stability probe produced non-finite amplitudes")
    return StabilitySeries(
        times=mesh.times(),
        overlap_mapped=overlap,
        points=tuple(snapped),
        density_diff=diffs,
    )
