"""
Nonautonomous random dynamical systems laboratory.
"""

__version__ = "0.1.0"
