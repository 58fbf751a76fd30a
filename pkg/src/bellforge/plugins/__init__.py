"""LP backends for local-polytope membership; importing the package registers them."""
from . import lp_backends as _lp_backends  # noqa: F401
from .registry import available, get, register

__all__ = ["available", "get", "register"]
