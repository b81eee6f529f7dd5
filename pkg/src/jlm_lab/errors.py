"""Exception hierarchy shared by all jlm_lab modules."""


class JlmLabError(Exception):
    """Base class for every error raised by this package."""


class ExprSyntaxError(JlmLabError):
    """Malformed expression text.

    Carries the character offset of the offending token and a short
    description of what was expected there.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownVariableError(JlmLabError):
    """An identifier is not among the declared variables."""

    def __init__(self, name, position=None):
        where = "" if position is None else f" (at offset {position})"
        super().__init__(f"unknown variable '{name}'{where}")
        self.name = name
        self.position = position


class DomainError(JlmLabError):
    """Evaluation left the domain of a sub-expression (ln of a non-positive
    value, division by zero, fractional power of a non-positive base, ...)."""

    def __init__(self, message, node=None, value=None, time=None, point=None):
        self.message = message
        self.node = node
        self.value = value
        self.time = time
        self.point = None if point is None else list(point)
        parts = [message]
        if node is not None:
            parts.append(f"node '{node}'")
        if value is not None:
            parts.append(f"argument {value!r}")
        if time is not None:
            parts.append(f"t={time!r}")
        if point is not None:
            parts.append(f"point {self.point!r}")
        super().__init__("; ".join(str(p) for p in parts))

    def with_context(self, time=None, point=None):
        """Copy of this error with trajectory context attached."""
        return DomainError(
            self.message,
            node=self.node,
            value=self.value,
            time=self.time if time is None else time,
            point=self.point if point is None else point,
        )


class ConstraintError(JlmLabError):
    """A structural constraint on a field definition is violated
    (e.g. a damping-strength function referencing momenta)."""


class NonpositiveMassError(JlmLabError):
    """Mass parameter must be strictly positive."""


class NotHomogeneousError(JlmLabError):
    """Euler-identity residual too large: the Hamiltonian is not homogeneous
    of the claimed degree in the momenta."""

    def __init__(self, degree, max_residual, worst_point):
        super().__init__(
            f"not momentum-homogeneous of degree {degree}: "
            f"max relative Euler residual {max_residual:.3e} at {list(worst_point)!r}"
        )
        self.degree = degree
        self.max_residual = max_residual
        self.worst_point = list(worst_point)


class KVanishesError(JlmLabError):
    """The damping-strength function vanishes at a sample point."""

    def __init__(self, q):
        super().__init__(f"damping strength K vanishes at q = {q!r}")
        self.q = q


class ComplexRootsError(JlmLabError):
    """The exponent quadratic has no real roots."""

    def __init__(self, discriminant):
        super().__init__(f"no real exponent: discriminant {discriminant!r} < 0")
        self.discriminant = discriminant


class CheilliniNotSatisfiedError(JlmLabError):
    """The Cheillini integrability condition fails: the candidate constant
    is not constant over the sampled q-range."""

    def __init__(self, residual_max, mean, q_samples, c_values):
        super().__init__(
            f"Cheillini condition not satisfied: c(q) varies by {residual_max:.3e} "
            f"around mean {mean:.6g} over {len(q_samples)} samples"
        )
        self.residual_max = float(residual_max)
        self.mean = float(mean)
        self.q_samples = [float(q) for q in q_samples]
        self.c_values = [float(c) for c in c_values]


class InvalidExponentError(JlmLabError):
    """l in {0, -1}: the multiplier exponent 1/l is undefined or excluded."""


class IntegrationFailureError(JlmLabError):
    """The stepper could not satisfy its tolerances (step underflow or the
    step budget was exhausted)."""


class DomainExitError(JlmLabError):
    """A trajectory left the validity region of a multiplier."""

    def __init__(self, exit_time, message=""):
        detail = f": {message}" if message else ""
        super().__init__(f"trajectory left the validity region at t={exit_time!r}{detail}")
        self.exit_time = exit_time


class NoRootError(JlmLabError):
    """No s with h(q0, p0, s) = level exists for the given (q0, p0)."""


class NotConstantDivergenceError(JlmLabError):
    """The field's divergence is not constant, so no linear volume law
    applies."""


class ConfigError(JlmLabError):
    """Scenario configuration is missing or malformed."""

    def __init__(self, section, field, message):
        super().__init__(f"[{section}] {field}: {message}")
        self.section = section
        self.field = field
