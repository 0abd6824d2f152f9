"""Pore-scale flow and reactive solute transport on voxel geometries."""

__version__ = "0.1.0"
