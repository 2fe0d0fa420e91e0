"""Ergonomic risk scoring and temporal action segmentation."""

__version__ = "0.1.0"
