"""Continuous-variable Bell inequality lab on a truncated Fock space."""

__version__ = "0.1.0"

__all__ = [
    "fock",
    "states",
    "inequalities",
    "npt",
    "sampling",
    "experiment",
    "cli",
]
