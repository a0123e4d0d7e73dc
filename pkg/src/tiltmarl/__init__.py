"""Multi-agent reinforcement learning for remote electrical tilt optimization.

A static Monte Carlo downlink simulator on hexagonal grids, a shared
Q-network driving one agent per optimized cell, and a rule-based expert
baseline.
"""
__version__ = "0.1.0"
