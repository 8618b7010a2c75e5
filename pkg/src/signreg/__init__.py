"""Sign regularity of fourth-order operators with distributional coefficients.

Hermite-cubic discretization of ``<L y, z> = int p y'' z'' + <q, y' z'> + <h, y z>``
with Green kernels, sign-change counting, interlacing certificates, the two
conjugation reductions and compound-minor checks.
"""

__version__ = "0.1.0"

from ._accel import backend
from .errors import (ChainSearchFailed, IllegalAtomOrder, NotPositiveDefinite, ParseError, SignRegError,
                     ValidationError)
from .problem import (AtomicTerm, BoundaryFunctional, GeneralizedCoefficient, Problem, ScalarCoefficient,
                      SecondOrderProblem, SubspaceSpec, cantilever, proposition11, stiff_foundation, threepoint,
                      validate_problem)
from .fem import PointLoad, assemble, discretize, solve
from .green import GreenKernel, compute_kernel, positivity_report, restrict_kernel
from .signs import random_sign_pattern, sign_chain_certificate, sign_changes, verify_nondecrease
from .tn import compound_minor, tn_report
from .transforms import multiplier_transform, sturm_weight, variable_change, verify_conjugation
