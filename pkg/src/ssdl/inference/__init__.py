from .data import RegressionDataset, empirical_l2, gaussian_loglik, log_likelihood
from .mapfit import DivergenceError, MapFit, dense_predict, init_dense, loss_and_grad, map_sgd_train
from .sampler import (
    CacheIncoherenceError,
    ChainState,
    PosteriorSummary,
    SamplerConfig,
    init_state,
    log_posterior,
    mh_step_beta,
    mh_step_pattern,
    mh_step_width,
    read_records,
    reflect,
    run_chain,
)
