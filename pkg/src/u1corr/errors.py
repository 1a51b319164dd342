class U1CorrError(Exception):
    """Base class for errors raised by u1corr."""


class ModelError(U1CorrError, ValueError):
    """The model or request is malformed."""


class GuardError(U1CorrError):
    """A numerical or combinatorial guard tripped."""


class SingularResolventError(GuardError):
    def __init__(self, message: str, rcond: float):
        super().__init__(f"{message} (reciprocal condition estimate {rcond:.3e})")
        self.rcond = rcond


class CutoffError(GuardError):
    """Population reached the truncation edge of the oracle Hilbert space."""


class OracleError(GuardError):
    """The master-equation reference could not produce a unique answer."""
