"""Variable-length CSI feedback with PCA compression and k-means quantization."""
from .bits import BitAllocation
from .config import PROFILES, ScenarioConfig

__all__ = ["BitAllocation", "PROFILES", "ScenarioConfig"]
__version__ = "0.1.0"
