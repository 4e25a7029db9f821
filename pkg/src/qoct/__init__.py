"""qoct: grid-based quantum optimal control of density and current.

Shapes a laser pulse so that a one-electron wavefunction on a hard-wall
grid ends up at a prescribed density, optionally with its probability
current quenched, at minimal fluence.
"""

from .grid import (
    ComplexField,
    Grid,
    RealField,
    VectorField,
    build_grid,
    divergence,
    gradient,
    inner_product,
    laplacian,
    norm,
    normalized,
)
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .model import (
    DipoleOperator,
    Potential,
    apply_hamiltonian,
    dipole_expectation,
    potential_eval,
    potential_field,
)
from .objective import (
    ALPHA_MAX,
    DENSITY_FLOOR,
    FunctionalBreakdown,
    TargetSpec,
    alpha,
    chi_terminal,
    evaluate_J,
    fluence_penalty,
    o1_density_overlap,
    o2_current,
)
from .observables import continuity_residual, current, density
from .optimizer import (
    ControlField,
    IterationRecord,
    OptimizationResult,
    StabilitySeries,
    field_from_pair,
    optimize,
    stability_probe,
)
from .propagator import Propagator, TimeMesh, imaginary_step, propagate, step
from .runner import run
from .spectrum import (
    EigenPair,
    lowest_states,
    mirror_parity,
    select_by_symmetry,
    superposition_density,
)

__version__ = "0.1.0"
