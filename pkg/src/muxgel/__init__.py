"""muxgel: simulator, classical reconstruction baseline, and evaluation
harness for spatially multiplexed visuo-tactile sensors."""

__version__ = "0.1.0"

from .errors import ConfigError, ContractError, MuxgelError, ShapeError  # noqa: F401
from .imaging import Image, Mask, disk_blur, hadamard, mask_blend  # noqa: F401
