from .app import NetworkStore, create_app

__all__ = ["NetworkStore", "create_app"]
