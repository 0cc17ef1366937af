"""Leader-following consensus of uncertain Euler-Lagrange agents over switching digraphs."""

__version__ = "0.1.0"
