"""Training-free argument component classification by multi-agent debate."""

from .labels import ArgLabel, LabelDistribution, StancePair, argmax, normalize, top_two

__all__ = ["ArgLabel", "LabelDistribution", "StancePair", "argmax", "normalize", "top_two"]
__version__ = "0.1.0"
