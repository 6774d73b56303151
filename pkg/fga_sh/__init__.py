# fga_sh/__init__.py
"""
fga-sh: diabatic frozen Gaussian surface hopping for two-level Schrödinger equations
"""

__version__ = "0.1.0"
