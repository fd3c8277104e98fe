"""API blueprint registration."""
from .routes import api_bp, register_error_handlers

__all__ = ["api_bp", "register_error_handlers"]
