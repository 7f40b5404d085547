"""Two-fidelity frequency-response simulation and meta-model fusion toolkit."""

__version__ = "0.1.0"
