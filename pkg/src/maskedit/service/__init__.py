"""HTTP service exposing the editing pipeline."""

from maskedit.service.app import create_app
from maskedit.service.config import ServiceConfig

__all__ = ["create_app", "ServiceConfig"]
