"""Space-time generalized finite differences for a Stokes/parabolic
moving-interface problem.

Typical use::

    from stgfdm import RunConfig, run
    result = run(RunConfig(example=1, nx=16))
    print(result.report["u"].L2)
"""

from .cli import RunConfig, RunResult, run, sweep
from .errors import *  # noqa: F401,F403
from .geometry import Category, PointCloud, RefinementPolicy, SpaceTimeDomain, generate_cloud
from .postprocess import ErrorReport, convergence_order, error_norms
from .problems import ProblemSpec, example
from .stencil import StencilSet, build_stencil, build_stencils

__version__ = "0.1.0"
