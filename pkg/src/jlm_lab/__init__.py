"""jlm_lab: Jacobi last multipliers and invariant measures for dissipative
vector fields (conformal, contact, generalized conformal, Lienard)."""

from .backend import BACKEND
from .errors import (
    CheilliniNotSatisfiedError,
    ComplexRootsError,
    ConfigError,
    ConstraintError,
    DomainError,
    DomainExitError,
    ExprSyntaxError,
    IntegrationFailureError,
    InvalidExponentError,
    JlmLabError,
    KVanishesError,
    NonpositiveMassError,
    NoRootError,
    NotConstantDivergenceError,
    NotHomogeneousError,
    UnknownVariableError,
)
from .expr import Expr, Jet2, eval_jet2, parse
from .systems import (
    FieldSpec,
    build_conformal_field,
    build_contact_field,
    build_generalized_conformal_field,
    build_hamiltonian_field,
    build_lienard_field,
    field_divergence,
    field_eval,
    field_jacobian,
    phase_variables,
)
from .flow import (
    IntegratorSettings,
    Trajectory,
    integrate,
    integrate_with_logvolume,
    monodromy,
)
from .multiplier import (
    CheilliniRoots,
    MultiplierSpec,
    cheillini_roots,
    multiplier_conformal_homogeneous,
    multiplier_contact,
    multiplier_lienard,
    multiplier_transport,
)
from .verify import (
    RegionSampler,
    VerificationReport,
    check_div_mx,
    check_level_set,
    check_transport,
    check_volume_law,
)

__version__ = "0.1.0"
