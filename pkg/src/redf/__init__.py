"""REDf: a self-contained short-term energy-demand forecasting engine.

Pipeline: hourly CSV ingestion and cleaning, a two-layer LSTM forecaster
trained with Adam and selected by grid search, seasonal-naive and
random-forest baselines, benchmark reports with figures, and a framed-JSON
serving layer (broker + model server + client).
"""

from . import errors
from .artifact import deserialize, serialize
from .baselines import Forest, RegressionTree, TreeConfig, fit_forest, fit_tree, seasonal_naive
from .evaluation import MetricsRow, evaluate, mae, r2, rmse
from .lstm import HyperParams, LstmLayerWeights, ModelParams, forward, init_params, rollout
from .numeric import DEFAULT_SEED, make_rng
from .serving import Broker, ModelServer, client_request, client_request_via_broker
from .timeseries import (
    MINMAX,
    ZSCORE,
    Scaler,
    TimeSeries,
    WindowedDataset,
    fit_scaler,
    handle_missing,
    handle_outliers,
    load_csv,
    make_windows,
    split,
)
from .training import EarlyStop, Grid, TrainHistory, adam_step, grid_search, train

__version__ = "0.1.0"

__all__ = [
    "errors",
    "serialize", "deserialize",
    "Forest", "RegressionTree", "TreeConfig", "fit_forest", "fit_tree", "seasonal_naive",
    "MetricsRow", "evaluate", "mae", "r2", "rmse",
    "HyperParams", "LstmLayerWeights", "ModelParams", "forward", "init_params", "rollout",
    "DEFAULT_SEED", "make_rng",
    "Broker", "ModelServer", "client_request", "client_request_via_broker",
    "MINMAX", "ZSCORE", "Scaler", "TimeSeries", "WindowedDataset",
    "fit_scaler", "handle_missing", "handle_outliers", "load_csv", "make_windows", "split",
    "EarlyStop", "Grid", "TrainHistory", "adam_step", "grid_search", "train",
    "__version__",
]
