"""cbm-trust - concept trustworthiness benchmark for concept bottleneck models."""

__version__ = "0.1.0"
