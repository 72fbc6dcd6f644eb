"""HDG solver for 2D elliptic problems with a matrix-free trace operator and h/p multigrid."""

__version__ = "0.1.0"
