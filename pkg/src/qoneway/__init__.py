"""Quantum one-way communication: PGM and classical-shadow conversions to classical protocols."""

__version__ = "0.1.0"
