"""Off-diagonal approximations of multiple Wiener-Ito integrals."""

__version__ = "0.1.0"
