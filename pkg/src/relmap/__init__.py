"""Reference-enhanced sensor heatmaps with uncertainty overlays."""

__version__ = "0.1.0"
