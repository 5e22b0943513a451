"""Exception hierarchy. The CLI maps each family onto an exit code."""


class SubdynError(Exception):
    """Base class for all library errors."""


class ValidationError(SubdynError, ValueError):
    """Malformed input: bad config, non-Hermitian operator, non-orthonormal basis."""


class CapacityError(SubdynError):
    """Composite (or Liouville) dimension exceeds the configured cap."""

    def __init__(self, dim, cap, what="composite dimension"):
        self.dim = dim
        self.cap = cap
        super().__init__(f"{what} {dim} exceeds cap {cap} (set SUBDYN_MAX_DIM to raise it)")


class NumericalSingularityError(SubdynError):
    """A numerically singular quantity was hit."""


class SingularResolventError(NumericalSingularityError):
    def __init__(self, nu, gap):
        self.nu = nu
        self.gap = gap
        super().__init__(f"resolvent singular at nu={nu}, gap={gap:.3g}")


class DegenerateBlockError(NumericalSingularityError):
    def __init__(self, nu):
        self.nu = nu
        super().__init__(f"zero self-consistent shift on a coupled degenerate block at nu={nu}")


class NormalizationError(NumericalSingularityError):
    def __init__(self, nu, value):
        self.nu = nu
        self.value = value
        super().__init__(f"non-invertible normalization 1 + <DC> = {value:.3g} at nu={nu}")


class DegeneracyError(NumericalSingularityError):
    """Eigenvector matching to an unperturbed label is ambiguous."""

    def __init__(self, nu, cluster):
        self.nu = nu
        self.cluster = list(cluster)
        super().__init__(f"ambiguous eigenvector matching for nu={nu}; cluster {self.cluster}")


class SingularTransformError(NumericalSingularityError):
    def __init__(self, det, reason):
        self.det = det
        super().__init__(f"singular triangulating transform (det={det:.3g}): {reason}")


class UnsupportedInputError(ValidationError):
    pass


class InvalidStateError(ValidationError):
    def __init__(self, eigenvalue):
        self.eigenvalue = eigenvalue
        super().__init__(f"not a positive semidefinite state: eigenvalue {eigenvalue:.3g}")


class UnreachableDurationError(SubdynError):
    def __init__(self, target):
        super().__init__(f"J profile integral never reaches {target:.6g}")


class NonUniformShiftError(SubdynError):
    """Energy shifts violate the uniform-distribution condition; carries the per-level report."""

    def __init__(self, report, spread):
        self.report = report
        self.spread = spread
        super().__init__(f"shifts are not uniformly distributed (delta_t spread {spread:.3g})")
