"""Open-ended 3D part segmentation with per-part HDP topic models and
argumentation-based category recognition."""

__version__ = "0.1.0"
