"""Direction recovery for population-average utilities from heterogeneous pairwise preferences."""

__version__ = "0.1.0"
