"""Euler-Maruyama for SDEs with distributional drift: Besov tools, Zvonkin transform, rate studies."""
__version__ = "0.1.0"
