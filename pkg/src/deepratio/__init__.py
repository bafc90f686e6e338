"""Change point detection by deep and kernel density-ratio estimation."""

__version__ = "0.1.0"
