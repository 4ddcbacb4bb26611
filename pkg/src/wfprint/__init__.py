"""Website-fingerprinting traffic analysis: captures to flows to classifiers."""

__version__ = "0.1.0"
