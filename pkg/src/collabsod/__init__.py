"""Collaborative-learning RGB-D salient object detection.

Edge, coarse-saliency and depth collaborators shape shared features during
training; inference needs the RGB image only.
"""

from .config import RunConfig
from .network import CollaborativeSOD, Toggles, ablation, build_network

__version__ = "0.1.0"

__all__ = ["CollaborativeSOD", "RunConfig", "Toggles", "ablation", "build_network"]
