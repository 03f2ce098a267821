"""
imopt: online optimization of time-varying costs with internal-model controllers
"""

__version__ = "0.1.0"
