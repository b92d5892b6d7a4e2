"""
Shared utilities package.

This package contains shared code, utilities, and common functionality
that can be used across the toolkit's services.
"""

from .utils.parallel import ordered_map
from .utils.to_serializable import to_serializable

__all__ = ["ordered_map", "to_serializable"]
