"""Two-scale neo-Hookean homogenization with a neural-network RVE surrogate."""

from ._fe2ml import *  # noqa: F401,F403
from ._fe2ml import __version__  # noqa: F401
