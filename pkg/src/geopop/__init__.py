"""Building-level population estimation from footprints, imagery and a DEM."""
from .errors import GeopopError

__version__ = "0.1.0"

__all__ = ["GeopopError", "__version__"]
