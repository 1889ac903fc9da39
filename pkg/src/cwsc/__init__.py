"""Generalized Curie-Weiss random matrix ensembles below the critical temperature."""

__version__ = "0.1.0"
