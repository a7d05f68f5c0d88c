"""Exception types shared across the package."""


class MjstabError(Exception):
    """Base class for all package-specific errors."""


class ModeCapExceeded(MjstabError):
    """Raised when an enumeration would exceed the configured mode cap."""


class SizeCapExceeded(MjstabError):
    """Raised when a brute-force operation exceeds its desk-scale size cap."""


class DisconnectedGraph(MjstabError):
    """Raised when an operation requires a connected graph."""


class DegenerateInterval(MjstabError):
    """Raised when an operation requires rho_l < rho_u strictly."""


class ParameterOutOfRange(MjstabError):
    """Raised when closed-form certificate parameters violate their preconditions."""


class InputError(MjstabError):
    """Raised on malformed problem files, TPM files or CLI inputs."""
