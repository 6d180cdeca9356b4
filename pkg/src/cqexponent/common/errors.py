from __future__ import annotations


class CQExponentError(ValueError):
    """
    Base class for every error raised by the toolkit.
    """


class ConfigError(CQExponentError):
    pass


class NotHermitianError(CQExponentError):
    def __init__(self, residual: float):
        super().__init__(f"matrix is not Hermitian (max |A - A^H| = {residual:.3e})")
        self.residual = residual


class DimensionError(CQExponentError):
    pass


class SpectralError(CQExponentError):
    """
    The eigensolver did not converge.
    """


class SpectralDomainError(CQExponentError):
    def __init__(self, eigenvalue: float, what: str = "spectral function"):
        super().__init__(f"eigenvalue {eigenvalue!r} is outside the domain of the {what}")
        self.eigenvalue = eigenvalue


class NotPositiveSemidefiniteError(CQExponentError):
    def __init__(self, eigenvalue: float, index: int | None = None):
        where = "" if index is None else f"state {index}: "
        super().__init__(f"{where}negative eigenvalue {eigenvalue!r}")
        self.eigenvalue = eigenvalue
        self.index = index


class TraceError(CQExponentError):
    def __init__(self, trace: float, index: int | None = None):
        where = "" if index is None else f"state {index}: "
        super().__init__(f"{where}trace {trace!r} differs from 1")
        self.trace = trace
        self.index = index


class ChannelFormatError(CQExponentError):
    pass


class PriorError(CQExponentError):
    pass


class ExponentDomainError(CQExponentError):
    pass


class SingularOperatorError(CQExponentError):
    def __init__(self, eigenvalue: float):
        super().__init__(
            f"operator is singular (smallest eigenvalue {eigenvalue!r}); "
            "use support-restricted evaluation"
        )
        self.eigenvalue = eigenvalue


class PartitionOfIdentityError(CQExponentError):
    def __init__(self, residual: float):
        super().__init__(f"sum C_i^H C_i differs from I (max residual {residual:.3e})")
        self.residual = residual


class FormulationMismatchError(CQExponentError):
    def __init__(self, difference: float):
        super().__init__(
            f"entropy and logarithm formulations disagree by {difference:.3e}"
        )
        self.difference = difference


class DimensionCapError(CQExponentError):
    def __init__(self, dim: int, cap: int):
        super().__init__(f"dimension {dim} exceeds the cap {cap}")
        self.dim = dim
        self.cap = cap


class IncompleteMeasurementError(CQExponentError):
    def __init__(self, residual: float):
        super().__init__(
            f"square-root measurement elements do not sum to the support projector "
            f"(max residual {residual:.3e})"
        )
        self.residual = residual


class ProbabilityRangeError(CQExponentError):
    def __init__(self, index: int, value: float):
        super().__init__(f"codeword {index}: error probability {value!r} is outside [0, 1]")
        self.index = index
        self.value = value
