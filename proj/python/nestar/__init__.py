"""Nested autoregressive flow-matching sandbox.

Thin wrapper over the C++ core; everything lives in the compiled module.
"""

from ._nestar import *  # noqa: F401,F403
from ._nestar import __version__  # noqa: F401
