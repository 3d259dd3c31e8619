"""Market-maker/taker simulation and strategy evaluation toolkit."""

__version__ = "0.1.0"
