"""Strip-wise, prior-based hierarchical segmentation for document structure extraction."""

__version__ = "0.1.0"
