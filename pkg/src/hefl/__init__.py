"""Byzantine-robust federated learning over RNS-CKKS encrypted model updates."""

__version__ = "0.1.0"
