"""FastAPI service exposing the game solvers over HTTP."""

from rsgames.service.app import create_app

__all__ = ["create_app"]
