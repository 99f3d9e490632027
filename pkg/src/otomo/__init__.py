"""otomo: measurement design and simulation for overlapping quantum tomography."""

__version__ = "0.1.0"
