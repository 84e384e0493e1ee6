from .app import create_app
from .client import service_client

__all__ = ["create_app", "service_client"]
