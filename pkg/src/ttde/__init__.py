"""Transport-based nonparametric density estimation on the unit cube.

Exact Knothe-Rosenblatt rearrangements between known densities, penalized
maximum-likelihood estimation of rationally parameterized triangular maps
over truncated wavelet bases, and a reproducible harness measuring empirical
convergence rates against the minimax exponent alpha/(2 alpha + d).
"""

from .densities import (
    DensityField,
    FactorizedDensity,
    GridSpec,
    default_grid,
    density_from_spec,
    integrate,
    make_test_density,
    mix_densities,
    validate_class_membership,
)
from .estimator import (
    FitConfig,
    FitResult,
    Schedule,
    fit,
    gradient,
    negative_log_likelihood,
    objective,
    tau_squared,
    tuning_schedule,
)
from .kr import (
    ConditionalCdfTable,
    KrMap,
    UnsupportedReferenceError,
    build_kr,
    conditional_cdf,
    conditional_density,
    marginal_density,
    pullback_density,
    sample_target,
    samples_to_csv,
)
from .maps import (
    LinkFunction,
    LinkRangeError,
    RationalTriangularMap,
    Theta,
    b_alpha_norm,
    natural_parameter,
)
from .metrics import (
    MetricsReport,
    c1diag_map_distance,
    c1diag_norm,
    compare_densities,
    h1diag_map_distance,
    hellinger,
    kl_divergence,
    l2_distance,
    rate_fit,
    tv_distance,
)
from .trimap import IdentityMap, InversionError, MonotonicityError, TriangularMap, invert_triangular
from .wavelets import WaveletBasis

__version__ = "0.1.0"
