"""Human-in-the-loop land-cover mapping pipeline."""

__version__ = "0.1.0"
