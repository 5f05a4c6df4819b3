"""Anchor mining and multi-anchor re-prompting for semi-supervised video object segmentation."""

__version__ = "0.1.0"
