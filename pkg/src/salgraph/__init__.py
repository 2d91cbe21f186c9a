"""Graph-based saliency prediction with externally supervised semantic proximity."""

__version__ = "0.1.0"

from .errors import DataFormatError, NumericError

__all__ = ["DataFormatError", "NumericError", "__version__"]
