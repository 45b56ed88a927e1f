"""Private collaborative relaying for distributed mean estimation."""

__version__ = "0.1.0"
