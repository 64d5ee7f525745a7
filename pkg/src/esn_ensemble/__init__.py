"""Echo state networks with configurable weight laws and ensemble constructions."""

from .core import SplitSpec, TimeSeries, error_reduction, mae, mse, rmse, split
from .datasets import MgParams, PreprocessKind, fit_preprocess, gen_arma, gen_sine, load_csv, mackey_glass, save_csv
from .distributions import CANONICAL_SPECS, RngStream, WeightKind, WeightSpec, arcsine_cdf, arcsine_pdf, derive_stream, sample
from .ensemble import (
    Ensemble,
    predict_ensemble,
    select_m_cv,
    train_bagging_ensemble,
    train_perturbation_ensemble,
)
from .reservoir import (
    DynamicLeak,
    EsnConfig,
    EsnModel,
    FixedLeak,
    Generative,
    Guided,
    InitState,
    StateNoise,
    init_esn,
    predict_generative,
    predict_guided,
    train_readout,
)

__version__ = "0.1.0"
