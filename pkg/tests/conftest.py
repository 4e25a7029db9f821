"""Shared fixtures and independent oracles for the test suite.

The dense Hamiltonian here is assembled directly from the stencil taps and
the hard-wall projection, without calling the library's operators, so that
eigensolver and propagator results can be checked against plain dense
linear algebra.
"""

import numpy as np
import pytest

import qoct

# 4th-order central second-derivative taps, times h^2
LAP_TAPS = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def dense_kinetic_1d(n: int, h: float) -> np.ndarray:
    """-1/2 d^2/dx^2 with zero extension past the box, no wall projection."""
    t = np.zeros((n, n))
    for i in range(n):
        for k in range(-2, 3):
            j = i + k
            if 0 <= j < n:
                t[i, j] += -0.5 * LAP_TAPS[k + 2] / h**2
    return t


def dense_hamiltonian(grid, v_values) -> np.ndarray:
    """Dense matrix of the discrete H0 with the outer layer projected out."""
    h = grid.spacing
    if grid.dim == 1:
        t = dense_kinetic_1d(grid.shape[0], h)
    else:
        nx, ny = grid.shape
        t = np.kron(dense_kinetic_1d(nx, h), np.eye(ny)) \
            + np.kron(np.eye(nx), dense_kinetic_1d(ny, h))
    wall = grid.boundary_mask.ravel()
    t[wall, :] = 0.0
    t[:, wall] = 0.0
    return t + np.diag(np.asarray(v_values, dtype=float).ravel())


def dense_spectrum(grid, v_values, k):
    """Lowest k eigenvalues of the hard-wall operator's interior block.

    The embedded matrix keeps diag(V) on wall nodes, which shows up as
    spurious decoupled eigenvalues at the wall potential values; the
    physical spectrum lives in the interior restriction.
    """
    H = dense_hamiltonian(grid, v_values)
    keep = np.flatnonzero(~grid.boundary_mask.ravel())
    return np.linalg.eigvalsh(H[np.ix_(keep, keep)])[:k]


def terminal_functional(values, grid, sqrt_ntg, w_c):
    """Independent value of the terminal merit -2 + 2 int sqrt(n n_tg) dr
    - w_c int |j|^2 dr.

    Equals O1 + O2 on normalized states (O1 differs by 1 - int n, a pure
    gauge term along psi that norm-preserving propagation never sees), and
    its unconstrained derivative with respect to conj(psi) is chi_terminal.
    """
    psi = qoct.ComplexField(grid, np.asarray(values).reshape(grid.shape))
    w = grid.quadrature_weight
    n = qoct.density(psi).values
    out = -2.0 + 2.0 * float(np.sum(np.sqrt(np.clip(n, 0.0, None)) * sqrt_ntg)) * w
    if w_c:
        j = qoct.current(psi).values
        out -= w_c * float(np.sum(j * j)) * w
    return out


def functional_gradient_fd(psi, sqrt_ntg, w_c, flat_index, hstep=3e-5):
    """Central finite differences of terminal_functional at one node.

    Real and imaginary probes combine into d/d(conj psi); dividing by the
    quadrature weight converts the partial derivative into the functional
    derivative that chi_terminal returns.
    """
    base = psi.values.ravel()
    grid = psi.grid

    def value(shift):
        v = base.copy()
        v[flat_index] += shift
        return terminal_functional(v, grid, sqrt_ntg, w_c)

    d_re = value(hstep) - value(-hstep)
    d_im = value(1j * hstep) - value(-1j * hstep)
    return (d_re + 1j * d_im) / (4.0 * hstep * grid.quadrature_weight)


def random_state(grid, rng, boundary_zero=True):
    """Smooth-ish normalized complex field for property checks."""
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    for axis in range(grid.dim):
        kern = np.array([0.25, 0.5, 0.25])
        vals = np.apply_along_axis(
            lambda a: np.convolve(a, kern, mode="same"), axis, vals.real
        ) + 1j * np.apply_along_axis(
            lambda a: np.convolve(a, kern, mode="same"), axis, vals.imag
        )
    if boundary_zero:
        vals[grid.boundary_mask] = 0.0
    f = qoct.ComplexField(grid, vals)
    return qoct.normalized(f)


@pytest.fixture(scope="session")
def well1d():
    grid = qoct.build_grid(1, 0.1, 5.0)
    V = qoct.potential_field(qoct.Potential(kind="well_1d"), grid)
    return grid, V


@pytest.fixture(scope="session")
def well1d_pairs(well1d):
    grid, V = well1d
    return qoct.lowest_states(V, 2)


@pytest.fixture(scope="session")
def fine_mix():
    """Random bound-state mixture on a fine grid, for derivative checks.

    Low eigenstates keep the state smooth on the well's own length scale,
    where the stencil product-rule defect of the current terms sits well
    below the comparison tolerance; rough states would not.
    """
    grid = qoct.build_grid(1, 0.0125, 5.0)
    V = qoct.potential_field(qoct.Potential(kind="well_1d"), grid)
    pairs = qoct.lowest_states(V, 6)
    rng = np.random.default_rng(7)
    coeff = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    coeff /= np.linalg.norm(coeff)
    psi = qoct.ComplexField(
        grid, sum(c * p.state.values for c, p in zip(coeff, pairs))
    )
    n_tg = qoct.superposition_density(
        [p.state for p in pairs[:2]], [2**-0.5, 2**-0.5]
    )
    n = qoct.density(psi).values
    eligible = np.flatnonzero(n >= 1e-3)
    eligible = eligible[(eligible >= 3) & (eligible < grid.shape[0] - 3)]
    points = rng.choice(eligible, size=20, replace=False)
    return psi, n_tg, points


@pytest.fixture(scope="session")
def well_setup():
    """1D well at benchmark resolution, with the superposition target."""
    grid = qoct.build_grid(1, 0.05, 5.0)
    V = qoct.potential_field(qoct.Potential(kind="well_1d"), grid)
    pairs = qoct.lowest_states(V, 2)
    n_tg = qoct.superposition_density(
        [p.state for p in pairs], [2**-0.5, 2**-0.5]
    )
    return grid, V, pairs, n_tg


@pytest.fixture(scope="session")
def example_pair(well_setup):
    """1D well benchmark runs: the superposition target from the resonant
    pi-pulse guess, with and without the current penalty."""
    import math

    from qoct.propagator import TimeMesh

    _, V, pairs, n_tg = well_setup
    dipole = qoct.DipoleOperator((1.0,))
    mesh = TimeMesh(0.05, 6000)
    omega = pairs[1].energy - pairs[0].energy
    mu01 = abs(qoct.dipole_expectation(pairs[1].state, pairs[0].state, dipole))
    amp = math.pi / (mu01 * mesh.total_time)
    results = {}
    for w_c, iters in ((10.0, 240), (0.0, 100)):
        guess = qoct.ControlField.sine_squared(mesh, dipole, amplitude=amp,
                                               frequency=omega)
        results[w_c] = qoct.optimize(
            pairs[0].state, V, guess, qoct.TargetSpec(n_tg, w_c),
            max_iter=iters, j_tol=1e-12,
        )
    return results
