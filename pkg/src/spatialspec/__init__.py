"""Series-based specification tests for regression functions under spatial dependence."""
from ._kernels import BACKEND
from .bootstrap import BootstrapResult, bootstrap_pvalues, extract_innovations, resample_and_regenerate
from .basis import BasisSpec, DesignMatrix, build_design, count_terms
from .covariance import (
    IID, MESS, SARMA, SEM, SMA, CovarianceModel, Isotropic, NonparDistance, SigmaEval,
    eval_sigma, eval_sigma_npw, sigma_inv_quadform, symmetric_factor,
)
from .errors import (
    AllEvaluationsFailed, InvalidArgument, RankDeficientDesign, SingularCovariance,
    SpatialSpecError, StageError,
)
from .optimize import OptimizeOptions, ParamSpace
from .qmle import (
    LINEAR, FitResult, NullFit, ParametricFamily, concentrated_loglik, concentrated_loglik_sar,
    fit_null, fit_qmle, fit_qmle_npw, fit_qmle_sar, profile_beta_sigma,
)
from .simulation import McDesign, RejectionTable, gen_outcome, gen_regressors, gen_theta, run_mc
from .spectest import (
    TestInput, TestPipeline, TestResult, compute_mhat, compute_mtilde, local_alternative_shift, run_test,
)
from .weights import (
    DistanceWeightSpec, WeightMatrix, build_distance_weights, knn_weights, read_weights,
    simulate_npw_truth, spectral_radius, write_weights,
)

__version__ = "0.1.0"
