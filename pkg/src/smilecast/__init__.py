"""Functional time-series modelling and forecasting of IV smile panels."""

from .panels import (DeltaGrid, CurvePanel, PanelSet, cross_sectional_mean,
                     inner_product, average_panel)
from .fpca import (CPV, Fixed, FpcaBasis, sample_covariance, eigendecompose,
                   select_k_cpv, fit_static_fpca)
from .longrun import (KernelWeights, BandwidthSpec, autocovariance_lag,
                      long_run_covariance, plugin_bandwidth, fit_dynamic_fpca)
from .scores import (ScoreSeries, ArimaFit, fit_auto_arima, forecast_scores,
                     rw_curve_forecast, ar1_curve_forecast)
from .models import (ModelSpec, MultilevelFit, ForecastBundle,
                     forecast_univariate, forecast_multivariate,
                     fit_multilevel, within_cluster_variability,
                     forecast_multilevel, fit_forecaster)
from .evaluation import (BacktestPlan, LossMatrix, BacktestResult,
                         run_backtest, mafe, msfe, mme, r_squared)
from .inference import McsConfig, McsResult, mcs, stationarity_test
from .trading import (MarketInputs, MarketSeries, TradingConfig, TradeLedger,
                      gk_price, straddle_strategy, performance_stats)

__version__ = "0.1.0"

__all__ = [
    "DeltaGrid", "CurvePanel", "PanelSet", "cross_sectional_mean",
    "inner_product", "average_panel",
    "CPV", "Fixed", "FpcaBasis", "sample_covariance", "eigendecompose",
    "select_k_cpv", "fit_static_fpca",
    "KernelWeights", "BandwidthSpec", "autocovariance_lag",
    "long_run_covariance", "plugin_bandwidth", "fit_dynamic_fpca",
    "ScoreSeries", "ArimaFit", "fit_auto_arima", "forecast_scores",
    "rw_curve_forecast", "ar1_curve_forecast",
    "ModelSpec", "MultilevelFit", "ForecastBundle", "forecast_univariate",
    "forecast_multivariate", "fit_multilevel", "within_cluster_variability",
    "forecast_multilevel", "fit_forecaster",
    "BacktestPlan", "LossMatrix", "BacktestResult", "run_backtest", "mafe",
    "msfe", "mme", "r_squared",
    "McsConfig", "McsResult", "mcs", "stationarity_test",
    "MarketInputs", "MarketSeries", "TradingConfig", "TradeLedger",
    "gk_price", "straddle_strategy", "performance_stats",
]
