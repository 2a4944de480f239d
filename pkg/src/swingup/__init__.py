"""Swing-up excitation of a driven two-level emitter."""

__version__ = "0.1.0"
