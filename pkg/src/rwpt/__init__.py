"""Discrete potential theory for symmetric planar random walks and their
lattice-torus projections."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .stepdist import (  # noqa: F401
    DistributionSpec,
    StepDistribution,
    build_distribution,
    builtin,
    check_condition_A,
    check_strong_aperiodicity,
    moment,
)
from .lattice import (  # noqa: F401
    Region,
    TorusGeometry,
    annulus,
    classify_jump,
    complement,
    disc,
    enumerate_region,
    project_pi,
    torus_distance,
    union,
)
