"""Cross-node federated graph neural network simulator."""
__version__ = "0.1.0"
