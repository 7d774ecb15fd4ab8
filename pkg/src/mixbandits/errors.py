"""Exception types shared across the package."""


class MixBanditError(Exception):
    """Base class for all package errors."""


class SummabilityError(MixBanditError):
    """A tail sum was requested for a profile whose coefficients are not summable."""


class UnboundedRegretError(MixBanditError):
    """The u_k fixed-point problem has no root below the search ceiling."""


class CertificationError(MixBanditError):
    """A process could not be given a summable mixing certificate."""


class ContractError(MixBanditError, ValueError):
    """An argument violates an operation's precondition."""


class InfeasibleError(MixBanditError):
    """Exact enumeration would exceed the configured size limit."""


class ConfigError(MixBanditError, ValueError):
    """An experiment configuration is invalid.

    ``field`` names the offending key as a dotted path.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
