"""Delta-shell pseudopotentials in harmonic traps, with an exact square-well reference."""

__version__ = "0.1.0"
