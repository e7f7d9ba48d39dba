"""Count-matrix CSV ingestion and emission, JSON documents and checkpoints.

Count CSVs have a header ``t,<label_1>,...,<label_J>`` and one row per time
step. Every JSON document carries a ``version`` field. All writers go
through a write-temp-then-rename step so readers never see partial files.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .core import CountMatrix, FixedGamma, GammaGrid, ModelConfig
from .errors import ConfigError, DataError
from .pl import FilterState, Summary

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) else v
    return obj


def write_json(path, doc: dict, kind: str):
    """Write ``doc`` with ``version`` and ``kind`` fields added."""
    body = {"version": FORMAT_VERSION, "kind": kind}
    body.update(_jsonable(doc))
    atomic_write_text(path, json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path, kind: Optional[str] = None) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}", row=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise DataError(f"{path}: missing version field")
    if doc["version"] != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {doc['version']!r}")
    if kind is not None and doc.get("kind") != kind:
        raise DataError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    return doc


# ---------------------------------------------------------------------------
# count matrices


def format_counts_csv(counts: CountMatrix) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *counts.series_labels])
    for k, t in enumerate(counts.time_labels):
        w.writerow([t, *(int(v) for v in counts.values[:, k])])
    return buf.getvalue()


def write_counts_csv(path, counts: CountMatrix):
    atomic_write_text(path, format_counts_csv(counts))


def _parse_int(text, row, col, what):
    s = text.strip()
    try:
        v = int(s)
    except ValueError:
        raise DataError(f"{what} {text!r} is not an integer", row=row, column=col) from None
    return v


def ingest_csv(path) -> CountMatrix:
    """Read a count CSV; errors name the 1-based file row and column."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"input file {path} does not exist") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not a text file ({exc.reason})") from None
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header_row, header = rows[0]
    if len(header) < 2:
        raise DataError("header needs a time column and at least one series", row=header_row)
    labels = [h.strip() for h in header[1:]]
    for k, lab in enumerate(labels):
        if not lab:
            raise DataError("empty series label", row=header_row, column=k + 2)
    if len(set(labels)) != len(labels):
        raise DataError("duplicate series labels", row=header_row)
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")

    times, data = [], []
    for lineno, r in rows[1:]:
        if len(r) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(r)}", row=lineno)
        t = _parse_int(r[0], lineno, 1, "time index")
        if times and t <= times[-1]:
            raise DataError(f"time index {t} does not increase", row=lineno, column=1)
        vals = []
        for k, cell in enumerate(r[1:]):
            v = _parse_int(cell, lineno, k + 2, "count")
            if v < 0:
                raise DataError(f"negative count {v}", row=lineno, column=k + 2)
            vals.append(v)
        times.append(t)
        data.append(vals)
    return CountMatrix(np.array(data, dtype=np.int64).T, tuple(labels), tuple(times))


# ---------------------------------------------------------------------------
# configuration


def config_to_dict(cfg: ModelConfig) -> dict:
    gm = cfg.gamma_mode
    gamma = {"fixed": gm.value} if isinstance(gm, FixedGamma) else {"grid": {"K": gm.K, "lo": gm.lo, "hi": gm.hi}}
    return {
        "J": cfg.J,
        "alpha0": cfg.alpha0,
        "beta0": cfg.beta0,
        "lambda_priors": [list(p) for p in cfg.lambda_priors],
        "gamma_mode": gamma,
        "n_particles": cfg.n_particles,
        "seed": cfg.seed,
        "propagation": cfg.propagation,
        "resampling": cfg.resampling,
        "gamma_likelihood": cfg.gamma_likelihood,
        "fixed_lambdas": None if cfg.fixed_lambdas is None else list(cfg.fixed_lambdas),
    }


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    gm = d.pop("gamma_mode", None)
    if gm is None:
        mode = GammaGrid()
    elif "fixed" in gm:
        mode = FixedGamma(float(gm["fixed"]))
    else:
        mode = GammaGrid(**gm["grid"])
    priors = d.pop("lambda_priors", None)
    fixed = d.pop("fixed_lambdas", None)
    try:
        return ModelConfig(
            gamma_mode=mode,
            lambda_priors=None if priors is None else tuple(tuple(p) for p in priors),
            fixed_lambdas=None if fixed is None else tuple(fixed),
            **d,
        )
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from None


# ---------------------------------------------------------------------------
# filter state checkpoints


_STATE_ARRAYS = ("theta", "lambdas", "stat_a", "stat_b", "env_alpha", "env_beta", "gammas",
                 "gamma_grid", "gamma_log_weights", "grid_alpha", "grid_beta")


def state_to_dict(state: FilterState) -> dict:
    doc = {"config": config_to_dict(state.config), "t": state.t,
           "ess_history": list(state.ess_history), "propagation_history": list(state.propagation_history),
           "propagation_mode": state.propagation_mode}
    for name in _STATE_ARRAYS:
        arr = getattr(state, name)
        doc[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
    return doc


def state_from_dict(doc: dict) -> FilterState:
    kw = {}
    for name in _STATE_ARRAYS:
        spec = doc[name]
        data = np.array([np.nan if v is None else v for v in spec["data"]], dtype=float)
        kw[name] = data.reshape(spec["shape"])
    return FilterState(
        config=config_from_dict(doc["config"]),
        t=int(doc["t"]),
        ess_history=[float(v) for v in doc["ess_history"]],
        propagation_history=list(doc["propagation_history"]),
        propagation_mode=doc["propagation_mode"],
        **kw,
    )


def summary_to_dict(s: Summary) -> dict:
    return {
        "t": s.t, "rate_mean": s.rate_mean, "rate_q": s.rate_q, "lambda_mean": s.lambda_mean,
        "lambda_q": s.lambda_q, "theta_mean": s.theta_mean, "theta_q": s.theta_q,
        "gamma_mean": s.gamma_mean, "gamma_mode": s.gamma_mode, "ess": s.ess,
    }


def summary_from_dict(d: dict) -> Summary:
    arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
    return Summary(
        t=int(d["t"]), rate_mean=arr("rate_mean"), rate_q=arr("rate_q"), lambda_mean=arr("lambda_mean"),
        lambda_q=arr("lambda_q"), theta_mean=float(d["theta_mean"]), theta_q=arr("theta_q"),
        gamma_mean=float(d["gamma_mean"]), gamma_mode=float(d["gamma_mode"]), ess=float(d["ess"]),
    )


def write_checkpoint(path, state: FilterState, summaries: Iterable[Summary], data_labels=None):
    write_json(path, {"state": state_to_dict(state), "summaries": [summary_to_dict(s) for s in summaries],
                      "series_labels": list(data_labels or [])}, kind="checkpoint")


def read_checkpoint(path):
    """Returns (FilterState, list of Summary, series labels)."""
    doc = read_json(path, kind="checkpoint")
    try:
        return (state_from_dict(doc["state"]), [summary_from_dict(s) for s in doc["summaries"]],
                tuple(doc.get("series_labels", ())))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed checkpoint ({exc})") from None


# ---------------------------------------------------------------------------
# result tables


def _fmt(v) -> str:
    return repr(float(v))


def format_summaries_csv(summaries: List[Summary], counts: CountMatrix) -> str:
    """One row per filtered step: rate mean and 95% band per series, theta, ESS, gamma."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["t"]
    for lab in counts.series_labels:
        head += [f"{lab}_rate_mean", f"{lab}_rate_lo", f"{lab}_rate_hi"]
    head += ["theta_mean", "theta_lo", "theta_hi", "ess", "gamma_mean", "gamma_mode"]
    w.writerow(head)
    for s in summaries:
        row = [counts.time_labels[s.t - 1]]
        for j in range(counts.J):
            row += [_fmt(s.rate_mean[j]), _fmt(s.rate_q[0, j]), _fmt(s.rate_q[2, j])]
        row += [_fmt(s.theta_mean), _fmt(s.theta_q[0]), _fmt(s.theta_q[2]), _fmt(s.ess),
                _fmt(s.gamma_mean), _fmt(s.gamma_mode)]
        w.writerow(row)
    return buf.getvalue()


def format_smoothed_csv(smoothed: dict, counts: CountMatrix) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["t"]
    for lab in counts.series_labels:
        head += [f"{lab}_rate_mean", f"{lab}_rate_lo", f"{lab}_rate_hi"]
    head += ["theta_mean", "theta_lo", "theta_hi"]
    w.writerow(head)
    for k, t in enumerate(counts.time_labels):
        row = [t]
        for j in range(counts.J):
            row += [_fmt(smoothed["rate_mean"][j, k]), _fmt(smoothed["rate_q"][0, j, k]), _fmt(smoothed["rate_q"][2, j, k])]
        row += [_fmt(smoothed["theta_mean"][k]), _fmt(smoothed["theta_q"][0, k]), _fmt(smoothed["theta_q"][2, k])]
        w.writerow(row)
    return buf.getvalue()


def format_draws_csv(draws, time_labels) -> str:
    """One row per retained draw: theta path then lambdas."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", *(f"theta_{t}" for t in time_labels), *(f"lambda_{lab}" for lab in draws.series_labels)])
    for i in range(draws.n_draws):
        w.writerow([i + 1, *map(_fmt, draws.theta_paths[i]), *map(_fmt, draws.lambda_draws[i])])
    return buf.getvalue()


def read_fitted_csv(path, counts: CountMatrix):
    """Read rate means and bands from a summaries or smoothed CSV.

    Returns (rate_mean J x T, rate_intervals J x T x 2, theta_mean T).
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise DataError(f"fitted file {path} does not exist") from None
    if len(rows) != counts.T:
        raise DataError(f"{path}: {len(rows)} rows but the counts have {counts.T} time steps")
    J, T = counts.J, counts.T
    mean = np.empty((J, T))
    iv = np.empty((J, T, 2))
    theta = np.empty(T)
    for k, r in enumerate(rows):
        try:
            for j, lab in enumerate(counts.series_labels):
                mean[j, k] = float(r[f"{lab}_rate_mean"])
                iv[j, k] = float(r[f"{lab}_rate_lo"]), float(r[f"{lab}_rate_hi"])
            theta[k] = float(r["theta_mean"])
        except KeyError as exc:
            raise DataError(f"{path}: missing column {exc.args[0]!r}", row=1) from None
        except (TypeError, ValueError):
            raise DataError(f"{path}: unparsable value", row=k + 2) from None
    return mean, iv, theta
