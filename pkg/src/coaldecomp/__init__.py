"""Möbius (coalitional) decompositions of quantities of interest of models with random inputs."""

from .engine import (
    AttributionVector,
    DecompositionReport,
    FractionalFlag,
    GradualCertificate,
    check_fractional,
    decompose,
    shapley_attribution,
    verify_gradual,
)
from .estimators import EstimationError, EstimatorBudget, KernelSpec, PhiEstimate, QoISpec
from .inputs import (
    GaussianCopula,
    IndependentMarginals,
    MultivariateGaussian,
    Normal,
    Triangular,
    Uniform,
    sample_conditional,
    sample_joint,
)
from .lattice import SetFunctionTable, mobius_transform, zeta_transform
from .models import Constant, Ishigami, Linear, LinearMap, SumDifference, oracle_variance_phi
from .rings import HadamardMatrix, Scalar, check_dk_membership, ring_add, ring_mul

__version__ = "0.1.0"
