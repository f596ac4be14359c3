"""Federated Quantum-Train LSTM: quantum-generated LSTM weights trained with federated averaging."""
from .errors import ConfigurationError, FederationError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigurationError", "FederationError", "__version__"]
