"""Fit finite mixtures by solving moment relaxations of W2 / TV distance problems."""

__version__ = "0.1.0"
