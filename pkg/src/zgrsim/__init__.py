"""Simulation of federated zeroth-order fine-tuning with cloud gradient guidance."""

__version__ = "0.1.0"
