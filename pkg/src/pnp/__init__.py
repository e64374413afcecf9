"""Self-deployment of mobile sensors over a hexagonal tiling."""

__version__ = "0.1.0"
