"""Loss-scaled (Gibbs) posteriors for calibrating computer models under model discrepancy.

The package covers the data and model types, an adaptive Metropolis sampler
for tempered-loss posteriors, Gaussian-process discrepancy tools, bootstrap
selection of the loss scale, and Wasserstein-barycenter combination of
posteriors from separately calibrated experiments.
"""

from .core import (
    ExperimentData, ForwardModel, FunctionModel, GaussianNLL, InverseGamma, L2Loss, LinearModel,
    Normal, ParameterPrior, Uniform, gaussian_nll_loss, l2_loss, profiled_gaussian_nll,
)
from .errors import (
    CalibrationError, ConditioningError, ConfigurationError, DomainError, InitializationError,
    OptimizationError, PrecisionError, StructuralError, TuningError,
)
from .gp import (
    GPDiscrepancy, NoDiscrepancy, ShiftFamily, SqExpKernel, effective_sample_size,
    empirical_discrepancy, fit_gp_mle, gls_fit, kernel_effective_sample_size, sample_gp,
)
from .sampler import (
    CredibleInterval, GibbsPosterior, PosteriorSample, credible_interval, laplace_interval,
    map_estimate, sample_gibbs,
)
from .tuning import BootstrapConfig, CoverageCurve, coverage_curve, select_loss_scale
from .wasp import ConsensusPosterior, GaussianSummary, combine, gaussianize

__version__ = "0.1.0"
