"""Adaptive decentralized three-operator splitting over simulated gossip networks."""

__version__ = "0.1.0"
