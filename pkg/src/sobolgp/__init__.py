"""Variance-based sensitivity analysis with Gaussian-process surrogates."""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    DesignMatrix,
    Frame,
    ParameterDef,
    ParameterSpace,
    ResponseStandardizer,
    ResponseVector,
    SpaceTransformer,
    lhs_sample,
    standardize,
    to_gaussian,
    to_physical,
    to_unit,
)
from .estimator import SobolAnalyzer, SurrogateSensitivity  # noqa: E402
from .models import (  # noqa: E402
    GFunction,
    Ishigami,
    PressureBin,
    PressureBinParams,
    generate_sample_set,
    ingest,
)
from .sobol import (  # noqa: E402
    SobolResult,
    brute_force_sobol,
    sobol_on_function,
    sobol_on_surrogate,
)
from .stats import inv_norm_cdf, norm_cdf  # noqa: E402
from .surrogate import GaussianProcessSurrogate, GprHyperparams  # noqa: E402

__all__ = [
    "__version__",
    "DesignMatrix",
    "Frame",
    "ParameterDef",
    "ParameterSpace",
    "ResponseStandardizer",
    "ResponseVector",
    "SpaceTransformer",
    "lhs_sample",
    "standardize",
    "to_gaussian",
    "to_physical",
    "to_unit",
    "GFunction",
    "Ishigami",
    "PressureBin",
    "PressureBinParams",
    "generate_sample_set",
    "ingest",
    "SobolResult",
    "brute_force_sobol",
    "sobol_on_function",
    "sobol_on_surrogate",
    "SobolAnalyzer",
    "SurrogateSensitivity",
    "inv_norm_cdf",
    "norm_cdf",
    "GaussianProcessSurrogate",
    "GprHyperparams",
]
