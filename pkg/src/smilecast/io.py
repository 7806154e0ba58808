"""Data ingestion, run configuration, and report emission.

Input IV data arrive as long-format CSV (``date,maturity,delta,iv``,
one row per cell) and are pivoted into aligned panels; days missing
any cell are dropped and counted.  A run is driven by one INI-style
config file; every emitted report embeds the config hash and the
global seed, and files are written atomically (temp then rename) so
re-runs overwrite cleanly.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io as _io
import json
import logging
import os
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .evaluation import BacktestPlan, LossMatrix
from .fpca import CPV, Fixed
from .inference import McsConfig
from .longrun import BandwidthSpec, KernelWeights
from .models import ModelSpec
from .panels import CurvePanel, DeltaGrid, PanelSet
from .trading import MarketSeries, TradingConfig

__all__ = [
    "RunConfig",
    "ingest_iv_csv",
    "write_iv_csv",
    "ingest_rates_csv",
    "write_rates_csv",
    "load_config",
    "write_loss_csv",
    "read_loss_csv",
]

logger = logging.getLogger(__name__)

IV_HEADER = ["date", "maturity", "delta", "iv"]
RATES_HEADER = ["date", "spot", "r_domestic", "r_foreign"]


def ingest_iv_csv(path: str, maturities=None) -> PanelSet:
    """Pivot a long-format IV CSV into an aligned panel set.

    Days missing any (maturity, delta) cell are dropped with a logged
    count.  Malformed rows raise with their line number; fewer than 30
    complete days is an error.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    cells: dict = {}
    deltas: list = []
    seen_maturities: list = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        lineno = 0
        for row in reader:
            lineno += 1
            if lineno == 1:
                if [c.strip().lower() for c in row] != IV_HEADER:
                    raise ValueError(
                        f"{path}:1: expected header {','.join(IV_HEADER)}")
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, "
                                 f"got {len(row)}")
            date, maturity, delta_s, iv_s = (c.strip() for c in row)
            try:
                delta = float(delta_s)
                iv = float(iv_s)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric delta or iv")
            if not np.isfinite(iv) or iv <= 0:
                raise ValueError(f"{path}:{lineno}: iv must be a positive "
                                 "finite number")
            if maturities is not None and maturity not in maturities:
                continue
            key = (date, maturity, delta)
            if key in cells:
                raise ValueError(f"{path}:{lineno}: duplicate cell {key}")
            cells[key] = iv
            if delta not in deltas:
                deltas.append(delta)
            if maturity not in seen_maturities:
                seen_maturities.append(maturity)

    if maturities is not None:
        missing = [m for m in maturities if m not in seen_maturities]
        if missing:
            raise ValueError(f"{path}: maturities not present: {missing}")
        seen_maturities = list(maturities)
    if not cells:
        raise ValueError(f"{path}: no data rows")
    deltas = sorted(deltas)
    dates = sorted({d for d, _, _ in cells})
    complete = [d for d in dates
                if all((d, m, x) in cells
                       for m in seen_maturities for x in deltas)]
    dropped = len(dates) - len(complete)
    if dropped:
        logger.info("dropped %d incomplete day(s) out of %d", dropped,
                    len(dates))
    if len(complete) < 30:
        raise ValueError(f"{path}: only {len(complete)} complete days; "
                         "need at least 30")
    grid = DeltaGrid(np.array(deltas))
    date_arr = np.array(complete)
    panels = []
    for m in seen_maturities:
        values = np.array([[cells[(d, m, x)] for x in deltas]
                           for d in complete])
        panels.append(CurvePanel(grid, date_arr, values, maturity_label=m))
    return PanelSet(tuple(panels))


def write_iv_csv(panel_set: PanelSet, path: str) -> None:
    """Inverse of ``ingest_iv_csv``; floats keep full precision."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(IV_HEADER)
    for panel in panel_set.panels:
        for i, date in enumerate(panel.dates):
            for j, delta in enumerate(panel.grid.points):
                writer.writerow([date, panel.maturity_label,
                                 repr(float(delta)),
                                 repr(float(panel.values[i, j]))])
    atomic_write_text(path, buf.getvalue())


def ingest_rates_csv(path: str) -> MarketSeries:
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    dates, spot, r_d, r_f = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        lineno = 0
        for row in reader:
            lineno += 1
            if lineno == 1:
                if [c.strip().lower() for c in row] != RATES_HEADER:
                    raise ValueError(
                        f"{path}:1: expected header {','.join(RATES_HEADER)}")
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields")
            try:
                dates.append(row[0].strip())
                spot.append(float(row[1]))
                r_d.append(float(row[2]))
                r_f.append(float(row[3]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric market field")
    return MarketSeries(np.array(dates), np.array(spot), np.array(r_d),
                        np.array(r_f))


def write_rates_csv(market: MarketSeries, path: str) -> None:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RATES_HEADER)
    for i, date in enumerate(market.dates):
        writer.writerow([date, repr(float(market.spot[i])),
                         repr(float(market.domestic_rate[i])),
                         repr(float(market.foreign_rate[i]))])
    atomic_write_text(path, buf.getvalue())


def align_market(market: MarketSeries, panel_set: PanelSet) -> MarketSeries:
    """Restrict a market series to the panel dates, erroring on gaps."""
    index = {d: i for i, d in enumerate(market.dates)}
    rows = []
    for d in panel_set.panels[0].dates:
        if d not in index:
            raise ValueError(f"market series is missing date {d!r}")
        rows.append(index[d])
    rows = np.array(rows)
    return MarketSeries(market.dates[rows], market.spot[rows],
                        market.domestic_rate[rows],
                        market.foreign_rate[rows])


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def substream_seed(seed: int, name: str) -> int:
    """Stable named substream of the global seed (crc32-based)."""
    return (int(seed) * 1000003 + zlib.crc32(name.encode())) % (2 ** 31 - 1)


def _parse_k_rule(text: str):
    text = text.strip().lower()
    if text.startswith("cpv:"):
        return CPV(float(text.split(":", 1)[1]))
    if text.startswith("fixed:"):
        return Fixed(int(text.split(":", 1)[1]))
    raise ValueError(f"cannot parse component rule {text!r}; use "
                     "'cpv:<threshold>' or 'fixed:<k>'")


_MODEL_FAMILIES = {
    "FTS": ("univariate", "static"),
    "DFTS": ("univariate", "dynamic"),
    "MFTS": ("multivariate", "static"),
    "DMFTS": ("multivariate", "dynamic"),
    "MLFTS": ("multilevel", "static"),
    "DMLFTS": ("multilevel", "dynamic"),
}


def parse_model_token(token: str, kernel: KernelWeights,
                      bandwidth: BandwidthSpec):
    """One entry of the model list, e.g. ``DFTS``, ``FTS:k=4``, ``RW``."""
    token = token.strip()
    name, _, arg = token.partition(":")
    key = name.strip().upper()
    if key in ("RW", "AR1"):
        if arg:
            raise ValueError(f"benchmark {key} takes no arguments")
        return key, key
    if key not in _MODEL_FAMILIES:
        raise ValueError(f"unknown model {name!r}")
    family, ckind = _MODEL_FAMILIES[key]
    k_rule = None
    l_rule = None
    if arg:
        for part in arg.split(","):
            pk, _, pv = part.partition("=")
            pk = pk.strip().lower()
            if pk == "k":
                k_rule = Fixed(int(pv))
            elif pk == "cpv":
                k_rule = CPV(float(pv))
            elif pk == "l":
                l_rule = Fixed(int(pv))
            elif pk == "cpv2":
                l_rule = CPV(float(pv))
            else:
                raise ValueError(f"unknown model argument {part!r}")
    if l_rule is not None and family != "multilevel":
        raise ValueError("l/cpv2 arguments apply to multilevel models only")
    spec = ModelSpec(family=family, covariance_kind=ckind, k_rule=k_rule,
                     l_rule=l_rule, kernel=kernel, bandwidth=bandwidth,
                     model_id=token)
    return token, spec


@dataclass
class RunConfig:
    """Everything one experiment needs, parsed from a single INI file."""

    seed: int = 0
    out_dir: str = "out"
    iv_csv: str = ""
    rates_csv: str = ""
    maturities: tuple | None = None
    models: tuple = ()
    kernel: KernelWeights = field(default_factory=KernelWeights)
    bandwidth: BandwidthSpec = field(default_factory=BandwidthSpec)
    initial_train_size: int = 40
    horizons: tuple = (1,)
    refit_every: int = 1
    mcs_cfg: McsConfig = field(default_factory=McsConfig)
    mcs_metric: str = "mafe"
    mcs_loss_csv: str = ""
    stationarity_n_mc: int = 1000
    trading: TradingConfig = field(default_factory=TradingConfig)
    trading_model: str = ""
    synth_days: int = 70
    config_hash: str = "none"

    def plan(self) -> BacktestPlan:
        return BacktestPlan(initial_train_size=self.initial_train_size,
                            horizons=self.horizons, models=self.models,
                            refit_every=self.refit_every)

    def stamp(self) -> str:
        return f"config_hash={self.config_hash} seed={self.seed}"


def _parse_kernel(text: str) -> KernelWeights:
    name, _, arg = text.strip().partition(":")
    q, m = 2, 1.0
    for part in arg.split(","):
        if not part:
            continue
        pk, _, pv = part.partition("=")
        if pk.strip() == "q":
            q = int(pv)
        elif pk.strip() == "m":
            m = float(pv)
        else:
            raise ValueError(f"unknown kernel argument {part!r}")
    return KernelWeights(family=name.strip().lower(), order_q=q, support_m=m)


def _parse_bandwidth(text: str) -> BandwidthSpec:
    text = text.strip().lower()
    if text == "plugin":
        return BandwidthSpec(mode="plugin")
    if text.startswith("plugin:"):
        return BandwidthSpec(mode="plugin", h=float(text.split(":", 1)[1]))
    if text.startswith("fixed:"):
        return BandwidthSpec(mode="fixed", h=float(text.split(":", 1)[1]))
    raise ValueError(f"cannot parse bandwidth {text!r}")


def load_config(path: str) -> RunConfig:
    """Parse and validate one INI experiment file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # tenor keys carry case-sensitive labels
    parser.read_string(raw.decode())

    cfg = RunConfig()
    cfg.config_hash = hashlib.sha256(raw).hexdigest()[:12]
    if parser.has_section("run"):
        run = parser["run"]
        cfg.seed = run.getint("seed", cfg.seed)
        cfg.out_dir = run.get("out", cfg.out_dir)
    if parser.has_section("data"):
        data = parser["data"]
        cfg.iv_csv = data.get("iv_csv", "")
        cfg.rates_csv = data.get("rates_csv", "")
        if data.get("maturities", ""):
            cfg.maturities = tuple(s.strip()
                                   for s in data["maturities"].split(","))
    if parser.has_section("models"):
        sec = parser["models"]
        if sec.get("kernel", ""):
            cfg.kernel = _parse_kernel(sec["kernel"])
        if sec.get("bandwidth", ""):
            cfg.bandwidth = _parse_bandwidth(sec["bandwidth"])
        tokens = [t for t in sec.get("list", "").split(",") if t.strip()]
        cfg.models = tuple(parse_model_token(t, cfg.kernel, cfg.bandwidth)
                           for t in tokens)
    if parser.has_section("backtest"):
        sec = parser["backtest"]
        cfg.initial_train_size = sec.getint("initial_train_size",
                                            cfg.initial_train_size)
        if sec.get("horizons", ""):
            cfg.horizons = tuple(int(h) for h in sec["horizons"].split(","))
        cfg.refit_every = sec.getint("refit_every", cfg.refit_every)
    if parser.has_section("mcs"):
        sec = parser["mcs"]
        block = sec.get("block_length", "auto").strip().lower()
        cfg.mcs_cfg = McsConfig(
            alpha=sec.getfloat("alpha", 0.05),
            n_bootstrap=sec.getint("n_bootstrap", 5000),
            block_length=None if block == "auto" else int(block),
            statistic=sec.get("statistic", "T_max"),
            seed=substream_seed(cfg.seed, "mcs"))
        cfg.mcs_metric = sec.get("metric", "mafe")
        cfg.mcs_loss_csv = sec.get("loss_csv", "")
    if parser.has_section("stationarity"):
        cfg.stationarity_n_mc = parser["stationarity"].getint("n_mc", 1000)
    if parser.has_section("trading"):
        sec = parser["trading"]
        tenors = {}
        for key in sec:
            if key.startswith("tenor."):
                tenors[key.split(".", 1)[1]] = sec.getfloat(key)
        kwargs = {}
        if tenors:
            kwargs["maturity_years"] = tenors
        cfg.trading = TradingConfig(atm_delta=sec.getfloat("atm_delta", 50.0),
                                    spread=sec.getfloat("spread", 0.0),
                                    **kwargs)
        cfg.trading_model = sec.get("model", "")
    if parser.has_section("synth"):
        cfg.synth_days = parser["synth"].getint("days", cfg.synth_days)

    ids = [mid for mid, _ in cfg.models]
    if len(set(ids)) != len(ids):
        raise ValueError("model ids must be unique")
    return cfg


def write_loss_csv(loss: LossMatrix, path: str, stamp: str) -> None:
    buf = _io.StringIO()
    buf.write(f"# {stamp} metric={loss.metric} "
              f"maturity={loss.maturity_label} horizon={loss.horizon}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["origin"] + list(loss.model_ids))
    for i, row in enumerate(loss.values):
        writer.writerow([i] + [repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_loss_csv(path: str) -> LossMatrix:
    if not os.path.exists(path):
        raise FileNotFoundError(f"loss matrix file not found: {path}")
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = {}
        if first.startswith("#"):
            for tok in first[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
            header = fh.readline()
        else:
            header = first
        model_ids = [c.strip() for c in header.strip().split(",")[1:]]
        rows = []
        for line in csv.reader(fh):
            if not line:
                continue
            rows.append([float(v) for v in line[1:]])
    return LossMatrix(meta.get("metric", "mafe"), tuple(model_ids),
                      np.array(rows),
                      maturity_label=meta.get("maturity", ""),
                      horizon=int(meta.get("horizon", 1)))


def write_csv_report(path: str, stamp: str, header: list,
                     rows: list) -> None:
    buf = _io.StringIO()
    buf.write(f"# {stamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v
                         for v in row])
    atomic_write_text(path, buf.getvalue())


def write_json_report(path: str, stamp: str, payload: dict) -> None:
    doc = {"meta": stamp, **payload}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
