"""Missing-edge disconnectivity analysis for pairs of group graphs."""

__version__ = "0.1.0"
