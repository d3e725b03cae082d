"""HTTP service wrapping the detection core."""

from .app import ServiceSettings, create_app

__all__ = ["ServiceSettings", "create_app"]
