"""UI package"""

from .styles import CUSTOM_CSS

__all__ = ['CUSTOM_CSS']

