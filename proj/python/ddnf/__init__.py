"""Diffeomorphic normalizing flows: Euler-integrated neural velocity fields."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
