"""
Shared utilities module containing common functionality for the toolkit.
"""

from .parallel import ordered_map
from .to_serializable import to_serializable

__all__ = ["ordered_map", "to_serializable"]
