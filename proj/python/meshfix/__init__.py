"""Error correction for programmable photonic meshes."""

from ._meshfix import *  # noqa: F401,F403
