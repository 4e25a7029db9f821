"""Run orchestration: execute a RunConfig and write plot-ready artifacts.

Every numeric output is tab-separated text with 17-significant-digit
floats, so identical configurations reproduce byte-identical files.  A
run directory gains a DONE sentinel only after every artifact is
complete; failures leave an error.json behind instead.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .grid import ComplexField, RealField, build_grid
from .model import DipoleOperator, Potential, potential_field
from .objective import TargetSpec
from .observables import density
from .optimizer import ControlField, optimize, stability_probe
from .propagator import TimeMesh, propagate
from .spectrum import lowest_states, select_by_symmetry, superposition_density

__all__ = ["run"]

DONE_NAME = "DONE"
ERROR_NAME = "error.json"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return "%d" % value
    return "%.17g" % value


def _write_tsv(path: Path, header, columns):
    rows = zip(*columns)
    with open(path, "w", newline="\n") as handle:
        handle.write("# " + "\t".join(header) + "\n")
        for row in rows:
            handle.write("\t".join(_fmt(v) for v in row) + "\n")


def _point_tag(point) -> str:
    return "_".join("%g" % c for c in point)


def _build_grid(config: RunConfig):
    return build_grid(config.grid_dim, config.grid_spacing,
                      config.grid_half_extent)


def _build_potential(config: RunConfig) -> Potential:
    kwargs = {}
    if config.potential_x_coefficients is not None:
        kwargs["x_coefficients"] = config.potential_x_coefficients
    if config.potential_y_coefficients is not None:
        kwargs["y_coefficients"] = config.potential_y_coefficients
    return Potential(kind=config.potential_kind, **kwargs)


def _require_file(path: Path, key: str):
    if not path.is_file():
        raise ConfigError(f"{key}: no such file: {path}")


def _save_state(path: Path, psi: ComplexField):
    grid = psi.grid
    np.savez(path, real=psi.values.real, imag=psi.values.imag,
             dim=grid.dim, spacing=grid.spacing,
             half_extents=np.asarray(grid.half_extents))


def _load_state(path: Path, grid, key: str) -> ComplexField:
    _require_file(path, key)
    with np.load(path) as data:
        if (int(data["dim"]) != grid.dim
                or abs(float(data["spacing"]) - grid.spacing) > 1e-12
                or not np.allclose(data["half_extents"],
                                   grid.half_extents, atol=1e-9)):
            raise ConfigError(
                f"{key}: state in {path.name} was saved on a different grid"
            )
        return ComplexField(grid, data["real"] + 1j * data["imag"])


def _load_field(path: Path, mesh: TimeMesh, dipole, key: str) -> ControlField:
    _require_file(path, key)
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape != (mesh.steps + 1, 2):
        raise ConfigError(
            f"{key}: {path.name} has {table.shape[0]} rows, "
            f"mesh needs {mesh.steps + 1}"
        )
    if not np.allclose(table[:, 0], mesh.times(), atol=1e-9):
        raise ConfigError(f"{key}: time column of {path.name} does not "
                          "match the configured mesh")
    return ControlField(table[:, 1], mesh, dipole)


def _load_density(path: Path, grid, key: str) -> RealField:
    _require_file(path, key)
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[0] != grid.size or table.shape[1] < grid.dim + 1:
        raise ConfigError(
            f"{key}: {path.name} has shape {table.shape}, grid needs "
            f"{grid.size} rows of coordinates plus a density column"
        )
    return RealField(grid, table[:, grid.dim].reshape(grid.shape))


def _dipole(config: RunConfig) -> DipoleOperator:
    axis = (1.0,) if config.grid_dim == 1 else (1.0, 0.0)
    return DipoleOperator(axis)


def _target_states_needed(config: RunConfig) -> int:
    if config.target_kind == "superposition":
        return max(config.target_states) + 1
    if config.target_kind == "symmetry":
        # enough room below and around a degenerate excited pair
        return 4
    return 0


def _resolve_target(config: RunConfig, grid, V):
    """Target density, the states behind it, and the transition frequency."""
    if config.target_kind == "file":
        n_tg = _load_density(config.target_density_file, grid,
                             "target.density_file")
        return n_tg, None, None
    pairs = lowest_states(V, _target_states_needed(config))
    if config.target_kind == "superposition":
        states = [pairs[i].state for i in config.target_states]
        n_tg = superposition_density(states, config.target_coefficients)
        if len(states) == 2:
            i, j = config.target_states
            omega = abs(pairs[j].energy - pairs[i].energy)
        else:
            omega = None
        return n_tg, pairs, omega
    selected = select_by_symmetry(pairs[1:], parity_x=config.target_parity_x,
                                  parity_y=config.target_parity_y)
    n_tg = superposition_density([pairs[0].state, selected.state],
                                 config.target_coefficients)
    return n_tg, pairs, abs(selected.energy - pairs[0].energy)


def _write_density(out: Path, grid, columns):
    axes = [m.ravel() for m in grid.meshes]
    names = ["x(a.u.)", "y(a.u.)"][: grid.dim]
    header = names + [name for name, _ in columns]
    data = axes + [vals.ravel() for _, vals in columns]
    _write_tsv(out / "density_T.tsv", header, data)


def _write_series(out: Path, series):
    _write_tsv(out / "overlap.tsv", ["t(a.u.)", "overlap_mapped"],
               [series.times, series.overlap_mapped])
    for point, diff in zip(series.points, series.density_diff):
        _write_tsv(out / f"monitor_{_point_tag(point)}.tsv",
                   ["t(a.u.)", "n_minus_ntg(a.u.)"], [series.times, diff])


def _run_eigensolve(config, out, grid, V):
    pairs = lowest_states(V, config.eigensolve_count)
    _write_tsv(out / "eigenstates.tsv",
               ["index", "energy(a.u.)", "residual"],
               [np.arange(len(pairs)),
                np.array([p.energy for p in pairs]),
                np.array([p.residual for p in pairs])])


def _run_propagate(config, out, grid, V):
    mesh = TimeMesh(config.time_dt, config.mesh_steps)
    dipole = _dipole(config)
    if config.propagate_state_file is not None:
        psi0 = _load_state(config.propagate_state_file, grid,
                           "propagate.state_file")
    else:
        psi0 = lowest_states(V, 1)[0].state
    if config.propagate_field_file is not None:
        field = _load_field(config.propagate_field_file, mesh, dipole,
                            "propagate.field_file")
    else:
        field = ControlField.zero(mesh, dipole)
    psi_T = propagate(psi0, V, field)
    _write_density(out, grid, [("n(a.u.)", density(psi_T).values)])


def _run_optimize(config, out, grid, V):
    mesh = TimeMesh(config.time_dt, config.mesh_steps)
    dipole = _dipole(config)
    n_tg, pairs, omega_auto = _resolve_target(config, grid, V)
    target = TargetSpec(n_tg, config.w_c)
    if config.guess_frequency == "auto":
        omega = omega_auto
    else:
        omega = config.guess_frequency
    initial = pairs[0].state if pairs else lowest_states(V, 1)[0].state

    seeds = config.guess_seeds
    summary = []
    for position, seed in enumerate(seeds):
        guess = ControlField.sine_squared(
            mesh, dipole, amplitude=config.guess_amplitude,
            frequency=omega, sign=config.guess_sign * seed,
        )
        result = optimize(initial, V, guess, target,
                          j_tol=config.tolerances_j_tol,
                          max_iter=config.tolerances_max_iter)
        sub = out if len(seeds) == 1 else out / f"seed_{position}"
        sub.mkdir(parents=True, exist_ok=True)
        _write_run_artifacts(config, sub, grid, V, mesh, target, result)
        summary.append((position, seed, result.best.J,
                        result.best.overlap_mapped))
    if len(seeds) > 1:
        cols = list(zip(*summary))
        _write_tsv(out / "seeds.tsv",
                   ["seed_index", "sign_factor", "J", "overlap_mapped"],
                   [np.array(cols[0]), np.array(cols[1]),
                    np.array(cols[2]), np.array(cols[3])])


def _write_run_artifacts(config, out, grid, V, mesh, target, result):
    history = result.history
    _write_tsv(out / "iterations.tsv",
               ["index", "J", "O1", "O2", "F_penalty", "overlap_mapped",
                "max_abs_field"],
               [np.array([r.index for r in history]),
                np.array([r.J for r in history]),
                np.array([r.O1 for r in history]),
                np.array([r.O2 for r in history]),
                np.array([r.F_penalty for r in history]),
                np.array([r.overlap_mapped for r in history]),
                np.array([r.max_abs_field for r in history])])
    _write_tsv(out / "field.tsv", ["t(a.u.)", "eps(a.u.)"],
               [mesh.times(), result.best_field.samples])
    _write_density(out, grid,
                   [("n(a.u.)", density(result.best_psi_T).values),
                    ("n_tg(a.u.)", target.n_tg.values)])
    _save_state(out / "state_T.npz", result.best_psi_T)
    if config.monitor_points is not None:
        series = stability_probe(result.best_psi_T, V, mesh, target,
                                 config.monitor_points)
        _write_series(out, series)


def _run_stability(config, out, grid, V):
    mesh = TimeMesh(config.time_dt, config.mesh_steps)
    n_tg, _, _ = _resolve_target(config, grid, V)
    target = TargetSpec(n_tg, config.w_c)
    psi_T = _load_state(config.stability_state_file, grid,
                        "stability.state_file")
    series = stability_probe(psi_T, V, mesh, target, config.monitor_points)
    _write_series(out, series)


_MODE_RUNNERS = {
    "eigensolve": _run_eigensolve,
    "propagate": _run_propagate,
    "optimize": _run_optimize,
    "stability": _run_stability,
}


def run(config: RunConfig) -> int:
    """Execute one configuration; 0 on success with a DONE sentinel.

    Runtime failures write a machine-readable error.json into the output
    directory and re-raise; the missing sentinel marks partial output.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    done = out / DONE_NAME
    if done.exists():
        done.unlink()
    try:
        grid = _build_grid(config)
        V = potential_field(_build_potential(config), grid)
        _MODE_RUNNERS[config.mode](config, out, grid, V)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "mode": config.mode}
        (out / ERROR_NAME).write_text(json.dumps(record, indent=2) + "\n")
        raise
    if (out / ERROR_NAME).exists():
        (out / ERROR_NAME).unlink()
    done.write_text("ok\n")
    return 0
