"""Contact process with renewal dormancy: simulation engine and companion tools."""

__version__ = "0.1.0"
