"""Reference-governor-guided control barrier functions for STL navigation."""

__version__ = "0.1.0"
