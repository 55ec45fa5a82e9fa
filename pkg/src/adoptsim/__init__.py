"""Technology-adoption contagion on geographically embedded social networks."""

__version__ = "0.1.0"
