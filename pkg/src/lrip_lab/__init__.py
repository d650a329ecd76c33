"""Numerical lab for instance-optimal decoding under a lower restricted isometry property.

The package provides union-of-subspaces signal models, random linear and
random-Fourier-feature measurement operators, the ideal model-constrained
decoder, and Monte-Carlo plus covering-bound certification of LRIP / BP / IOP
constants, together with a batch CLI harness (``lrip-lab``).
"""

__version__ = "0.1.0"

from .errors import ConfigError, InputError, LripLabError, NumericError, SamplingError
from .spaces import Pseudometric, kernel_norm_equivalence, meas_norm
from .models import (
    CoveringBound,
    SecantSample,
    UnionOfSubspaces,
    covering_bound_model,
    covering_bound_secant,
    greedy_cover,
    project_to_model,
    sample_model_point,
    sample_secant,
)
from .operators import (
    GammaMoments,
    LinearGaussianOperator,
    NonlinearLripHypotheses,
    RandomFourierOperator,
    hypothesis_constants,
    sample_lambda,
    weight_f,
)
from .decoder import DecodeResult, DecoderOptions, decode_linear, decode_nonlinear, residual_certificate
from .certifier import (
    BpEstimate,
    ConcentrationEstimate,
    IopWitness,
    LripEstimate,
    Prop1Result,
    Prop2Result,
    RecommendedM,
    check_iop_inequality,
    estimate_bp,
    estimate_concentration,
    estimate_lrip,
    lrip_from_iop_witness,
    prop1_failure_bound,
    prop2_failure_bound,
    recommend_m,
)

__all__ = [
    "__version__",
    "LripLabError", "InputError", "ConfigError", "SamplingError", "NumericError",
    "Pseudometric", "meas_norm", "kernel_norm_equivalence",
    "UnionOfSubspaces", "SecantSample", "CoveringBound",
    "sample_model_point", "project_to_model", "sample_secant",
    "covering_bound_model", "covering_bound_secant", "greedy_cover",
    "LinearGaussianOperator", "RandomFourierOperator", "GammaMoments",
    "NonlinearLripHypotheses", "weight_f", "sample_lambda", "hypothesis_constants",
    "DecoderOptions", "DecodeResult", "decode_linear", "decode_nonlinear",
    "residual_certificate",
    "LripEstimate", "BpEstimate", "IopWitness", "ConcentrationEstimate",
    "Prop1Result", "Prop2Result", "RecommendedM",
    "estimate_lrip", "estimate_bp", "check_iop_inequality", "lrip_from_iop_witness",
    "estimate_concentration", "prop1_failure_bound", "prop2_failure_bound",
    "recommend_m",
]
