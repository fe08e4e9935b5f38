"""Two-stage DSO market toolkit: robust day-ahead bidding and real-time balancing."""

__version__ = "0.1.0"
