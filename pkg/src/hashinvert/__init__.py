"""Step-reduced SHA-1 preimage search with a CDCL solver and a CEGAR loop."""

__version__ = "0.1.0"
