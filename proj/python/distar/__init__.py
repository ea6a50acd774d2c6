from ._distar import *  # noqa: F401,F403
from ._distar import __version__  # noqa: F401
