"""Tile-based 360-degree video streaming lab with multi-agent rate adaptation."""

__version__ = "0.1.0"
