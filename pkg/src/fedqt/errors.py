"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid sizes, indices or experiment settings."""


class FederationError(RuntimeError):
    """Raised when federated training produces a non-finite loss."""
