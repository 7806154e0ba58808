"""Command-line pipeline: fit, backtest, mcs, stationarity, trade, synth.

Each subcommand reads one config file, runs the corresponding stage and
emits CSV/JSON reports into the output directory.  All randomness is
derived from the single global seed through named substreams, so a
repeated run with the same config produces byte-identical reports.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import io as sio
from . import synth
from .evaluation import BacktestPlan, run_backtest
from .inference import mcs, stationarity_test
from .models import ModelSpec, fit_multilevel, within_cluster_variability
from .evaluation import fit_model_entry
from .panels import PanelSet
from .trading import performance_stats, straddle_strategy

logger = logging.getLogger(__name__)


def _load_panels(cfg: sio.RunConfig) -> PanelSet:
    if not cfg.iv_csv:
        raise ValueError("config is missing data.iv_csv")
    return sio.ingest_iv_csv(cfg.iv_csv, maturities=cfg.maturities)


def _out(cfg: sio.RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def cmd_synth(cfg: sio.RunConfig) -> None:
    """Write a deterministic synthetic IV + rates fixture."""
    n = cfg.synth_days
    rng = np.random.default_rng(sio.substream_seed(cfg.seed, "synth"))
    panel_set, _ = synth.multilevel_set(rng, n)
    sio.write_iv_csv(panel_set, _out(cfg, "iv.csv"))
    market = synth.market_series(rng, panel_set.panels[0].dates)
    sio.write_rates_csv(market, _out(cfg, "rates.csv"))
    logger.info("wrote synthetic fixture with %d days to %s", n, cfg.out_dir)


def cmd_fit(cfg: sio.RunConfig) -> None:
    """Full-sample fits: R^2 tables and basis summaries per model."""
    panel_set = _load_panels(cfg)
    from .evaluation import r_squared

    r2_rows = []
    wcv_rows = []
    summary = {}
    for model_id, spec in cfg.models:
        if not isinstance(spec, ModelSpec):
            continue  # benchmarks have no in-sample fit
        fitted = fit_model_entry(panel_set, spec)
        fits = fitted.fitted_values()
        for panel in panel_set.panels:
            _, total = r_squared(panel, fits[panel.maturity_label])
            r2_rows.append([model_id, panel.maturity_label, float(total)])
        summary[model_id] = {"retained": _jsonable(fitted.retained)}
        if spec.family == "multilevel":
            ml = fit_multilevel(panel_set, spec)
            for j, label in enumerate(ml.labels):
                wcv_rows.append([model_id, label,
                                 float(within_cluster_variability(ml, j))])
    stamp = cfg.stamp()
    sio.write_csv_report(_out(cfg, "fit_r2.csv"), stamp,
                         ["model", "maturity", "total_r2"], r2_rows)
    if wcv_rows:
        sio.write_csv_report(_out(cfg, "within_cluster.csv"), stamp,
                             ["model", "maturity", "within_cluster"],
                             wcv_rows)
    sio.write_json_report(_out(cfg, "basis_summary.json"), stamp,
                          {"models": summary})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def cmd_backtest(cfg: sio.RunConfig) -> None:
    """Expanding-window run; loss matrices and error summary tables."""
    panel_set = _load_panels(cfg)
    result = run_backtest(panel_set, cfg.plan())
    stamp = cfg.stamp()
    for h in cfg.horizons:
        for label in panel_set.labels:
            for metric in ("mafe", "msfe"):
                loss = result.loss_matrix(metric, label, h)
                sio.write_loss_csv(
                    loss, _out(cfg, f"loss_{metric}_{label}_h{h}.csv"), stamp)
        rows = [[r["model"], r["maturity"], r["horizon"], r["mafe"],
                 r["msfe"], r["mme_u"], r["mme_o"]]
                for r in result.summary_rows(h)]
        sio.write_csv_report(
            _out(cfg, f"summary_by_maturity_h{h}.csv"), stamp,
            ["model", "maturity", "horizon", "mafe", "msfe", "mme_u",
             "mme_o"], rows)
        drows = [[r["model"], r["delta"], r["horizon"], r["mafe"], r["msfe"]]
                 for r in result.delta_rows(h)]
        sio.write_csv_report(
            _out(cfg, f"summary_by_delta_h{h}.csv"), stamp,
            ["model", "delta", "horizon", "mafe", "msfe"], drows)


def cmd_mcs(cfg: sio.RunConfig) -> None:
    """Model confidence set on a stored or freshly computed loss matrix."""
    stamp = cfg.stamp()
    if cfg.mcs_loss_csv:
        losses = [sio.read_loss_csv(cfg.mcs_loss_csv)]
    else:
        panel_set = _load_panels(cfg)
        result = run_backtest(panel_set, cfg.plan())
        losses = [result.loss_matrix(cfg.mcs_metric, label, h)
                  for label in panel_set.labels for h in cfg.horizons]
    payload = {}
    for loss in losses:
        res = mcs(loss, cfg.mcs_cfg)
        key = f"{loss.metric}_{loss.maturity_label}_h{loss.horizon}"
        payload[key] = {
            "superior_set": list(res.superior_set),
            "elimination_order": [[mid, p] for mid, p in
                                  res.elimination_order],
            "mcs_p_values": {k: float(v)
                             for k, v in res.mcs_p_values.items()},
        }
    sio.write_json_report(_out(cfg, "mcs.json"), stamp, {"results": payload})


def cmd_stationarity(cfg: sio.RunConfig) -> None:
    """Stationarity test p-value per maturity."""
    panel_set = _load_panels(cfg)
    seed = sio.substream_seed(cfg.seed, "stationarity")
    rows = [[p.maturity_label,
             float(stationarity_test(p, n_mc=cfg.stationarity_n_mc,
                                     seed=seed))]
            for p in panel_set.panels]
    sio.write_csv_report(_out(cfg, "stationarity.csv"), cfg.stamp(),
                         ["maturity", "p_value"], rows)


def cmd_trade(cfg: sio.RunConfig) -> None:
    """One-day-ahead straddle backtest for the configured model."""
    panel_set = _load_panels(cfg)
    if not cfg.rates_csv:
        raise ValueError("config is missing data.rates_csv")
    market = sio.align_market(sio.ingest_rates_csv(cfg.rates_csv), panel_set)
    model_map = dict(cfg.models)
    model_id = cfg.trading_model or cfg.models[0][0]
    if model_id not in model_map:
        raise ValueError(f"trading model {model_id!r} is not in the model "
                         "list")
    plan = BacktestPlan(initial_train_size=cfg.initial_train_size,
                        horizons=(1,),
                        models=((model_id, model_map[model_id]),),
                        refit_every=cfg.refit_every)
    result = run_backtest(panel_set, plan)
    ledgers = straddle_strategy(result.bundles[(model_id, 1)], panel_set,
                                market, cfg.trading)
    stamp = cfg.stamp()
    stats = {}
    for label, ledger in ledgers.items():
        rows = [[str(ledger.dates[i]), int(ledger.signals[i]),
                 float(ledger.entry_prices[i]), float(ledger.exit_prices[i]),
                 float(ledger.returns[i])]
                for i in range(len(ledger.returns))]
        sio.write_csv_report(_out(cfg, f"ledger_{label}.csv"), stamp,
                             ["date", "signal", "entry", "exit", "return"],
                             rows)
        entry = {}
        for trim, key in ((0.0, "full"), (0.05, "trimmed_5pct")):
            try:
                entry[key] = performance_stats(ledger, trim=trim)
            except ValueError as err:
                entry[key] = {"error": str(err)}
        stats[label] = entry
    sio.write_json_report(_out(cfg, "trading_stats.json"), stamp,
                          {"model": model_id, "stats": stats})


_COMMANDS = {
    "fit": cmd_fit,
    "backtest": cmd_backtest,
    "mcs": cmd_mcs,
    "stationarity": cmd_stationarity,
    "trade": cmd_trade,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smilecast",
        description="Functional time-series forecasting of IV smile panels")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="INI config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the global seed")
    parser.add_argument("--out", default=None,
                        help="override the output directory")
    parser.add_argument("--horizons", default=None,
                        help="override horizons, e.g. 1,5,10")
    parser.add_argument("--models", default=None,
                        help="override the model list, e.g. DFTS,RW")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run_pipeline(cfg: sio.RunConfig, command: str) -> None:
    if command not in _COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    _COMMANDS[command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = sio.load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.horizons is not None:
            cfg.horizons = tuple(int(h) for h in args.horizons.split(","))
        if args.models is not None:
            cfg.models = tuple(
                sio.parse_model_token(t, cfg.kernel, cfg.bandwidth)
                for t in args.models.split(","))
        run_pipeline(cfg, args.command)
    except (ValueError, FileNotFoundError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
