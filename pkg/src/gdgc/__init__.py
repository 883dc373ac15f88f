"""Gradient descent with a general cost, alternating minimization and the
geometry needed to certify their convergence rates."""
from .core import *  # noqa: F401,F403
from .costs import *  # noqa: F401,F403
from .geometry import *  # noqa: F401,F403
from .transforms import *  # noqa: F401,F403
from .solvers import *  # noqa: F401,F403
from .verify import *  # noqa: F401,F403
from . import core, costs, geometry, transforms, solvers, verify  # noqa: F401

__version__ = "0.1.0"

__all__ = (core.__all__ + costs.__all__ + geometry.__all__ + transforms.__all__
           + solvers.__all__ + verify.__all__)
