"""Pseudo-label 3D multi-object tracking."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
