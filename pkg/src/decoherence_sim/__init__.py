"""Quantum decoherence functions versus classical-noise ensembles."""

__version__ = "0.1.0"
