"""Trajectory stitching augmentation and diffusion planning on grid mazes."""

from trajstitch._core import *  # noqa: F401,F403
from trajstitch._core import __doc__  # noqa: F401
