"""stowave v0.1 - Stochastic wave equation simulator and Gaussian-fluctuation harness"""

__version__ = "0.1.0"
