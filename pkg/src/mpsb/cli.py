"""Command-line front end: ``mpsb simulate|filter|smooth|eval|bench``.

Every subcommand is a pure function of (inputs, config, seed): re-running
writes byte-identical artifacts. Wall-clock timings go to a separate
``timing.json`` so they do not break that property.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical or
degeneracy error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import ffbs, metrics, pl
from . import io as mio
from .core import CountMatrix, FixedGamma, GammaGrid, ModelConfig
from .errors import ConfigError, ConvergenceError, DataError, DegenerateFilterError, DomainError, SamplerInefficiencyError
from .simulator import simulate

log = logging.getLogger("mpsb")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
REFERENCE_SECONDS = 17.25


@dataclass
class RunConfig:
    """Everything a subcommand needs; the JSON config file mirrors these fields."""

    seed: int = 0
    out: str = "out"
    input: Optional[str] = None
    # model
    alpha0: float = 10.0
    beta0: float = 10.0
    lambda_priors: Optional[List[List[float]]] = None
    gamma: Optional[float] = None
    gamma_grid: int = 30
    n_particles: int = 1000
    propagation: str = "sis"
    resampling: str = "systematic"
    gamma_likelihood: str = "grid-track"
    fixed_lambdas: Optional[List[float]] = None
    # simulate
    T: int = 40
    n_sims: int = 1
    true_lambdas: List[float] = field(default_factory=lambda: [2.0, 2.5, 3.0, 3.5, 4.0])
    true_gamma: float = 0.3
    # filter
    emit_checkpoints: bool = False
    checkpoint_every: int = 0
    resume: Optional[str] = None
    # smooth
    n_iter: int = 21_000
    burn_in: int = 1000
    thin: int = 4
    n_chains: int = 1
    # eval
    fitted: Optional[str] = None
    trace: Optional[str] = None
    posterior: Optional[str] = None

    def __post_init__(self):
        if int(self.seed) != self.seed:
            raise ConfigError("seed must be an integer")
        if self.n_sims < 1 or self.n_chains < 1:
            raise ConfigError("n_sims and n_chains must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    @classmethod
    def from_dict(cls, d: dict):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def model_config(self, J: int) -> ModelConfig:
        mode = FixedGamma(float(self.gamma)) if self.gamma is not None else GammaGrid(int(self.gamma_grid))
        return ModelConfig(
            J=J,
            alpha0=self.alpha0,
            beta0=self.beta0,
            lambda_priors=None if self.lambda_priors is None else tuple(tuple(p) for p in self.lambda_priors),
            gamma_mode=mode,
            n_particles=int(self.n_particles),
            seed=int(self.seed),
            propagation=self.propagation,
            resampling=self.resampling,
            gamma_likelihood=self.gamma_likelihood,
            fixed_lambdas=None if self.fixed_lambdas is None else tuple(self.fixed_lambdas),
        )

    def gibbs_config(self) -> ffbs.GibbsConfig:
        return ffbs.GibbsConfig(self.n_iter, self.burn_in, self.thin, 0.3 if self.gamma is None else float(self.gamma))


def max_workers() -> int:
    raw = os.environ.get("MPSB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MPSB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("MPSB_THREADS must be >= 1")
    return n


def _fan_out(fn, tasks):
    workers = min(max_workers(), len(tasks))
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _write_timing(out: Path, **values):
    mio.write_json(out / "timing.json", values, kind="timing")


def _require_input(cfg: RunConfig) -> CountMatrix:
    if not cfg.input:
        raise ConfigError("an input count CSV is required (--input or 'input' in the config)")
    return mio.ingest_csv(cfg.input)


# ---------------------------------------------------------------------------
# subcommands


def _simulate_one(task):
    cfg, seed, out = task
    trace = simulate(cfg.true_lambdas, cfg.true_gamma, cfg.alpha0, cfg.beta0, cfg.T, seed=seed)
    mio.write_counts_csv(out / "counts.csv", trace.counts)
    mio.write_json(
        out / "trace.json",
        {"theta0": trace.theta0, "theta": trace.thetas, "innovations": trace.innovations,
         "alpha": trace.alphas, "config": trace.config_echo},
        kind="trace",
    )
    return str(out)


def run_simulate(cfg: RunConfig) -> List[str]:
    """Write counts.csv and trace.json; n_sims > 1 writes sim_000, sim_001, ... with seeds seed+i."""
    out = Path(cfg.out)
    if cfg.n_sims == 1:
        tasks = [(cfg, cfg.seed, out)]
    else:
        tasks = [(cfg, cfg.seed + i, out / f"sim_{i:03d}") for i in range(cfg.n_sims)]
    return _fan_out(_simulate_one, tasks)


def _posterior_doc(state: pl.FilterState, counts: CountMatrix):
    s = pl.posterior_summary(state)
    return {
        "t": state.t,
        "series_labels": list(counts.series_labels),
        "lambda_mean": s.lambda_mean,
        "lambda_q": s.lambda_q,
        "quantiles": list(pl.QUANTILES),
        "gamma_posterior": [[g, p] for g, p in pl.gamma_posterior(state)],
        "gamma_mean": s.gamma_mean,
        "gamma_mode": s.gamma_mode,
        "propagation_history": list(state.propagation_history),
        "final_ess": s.ess,
    }


def run_filter(cfg: RunConfig) -> List[str]:
    """Particle-learning filter over the input counts."""
    counts = _require_input(cfg)
    out = Path(cfg.out)
    model = cfg.model_config(counts.J)
    state, prior = None, []
    if cfg.resume:
        state, prior, labels = mio.read_checkpoint(cfg.resume)
        if labels and tuple(labels) != counts.series_labels:
            raise DataError("checkpoint series labels do not match the input")
        if state.config != model:
            raise ConfigError("checkpoint was written with a different model configuration")
        if state.t > counts.T:
            raise DataError("checkpoint is ahead of the input data")

    written = []
    summaries = list(prior)
    ckpt_dir = out / "checkpoints"

    def on_step(st):
        summaries.append(pl.posterior_summary(st))
        last = st.t == counts.T
        if cfg.emit_checkpoints and (last or (cfg.checkpoint_every and st.t % cfg.checkpoint_every == 0)):
            path = ckpt_dir / f"checkpoint_t{st.t:04d}.json"
            mio.write_checkpoint(path, st, summaries, counts.series_labels)
            written.append(str(path))

    t0 = time.perf_counter()
    state, _ = pl.run(counts, model, state=state, on_step=on_step)
    elapsed = time.perf_counter() - t0

    mio.atomic_write_text(out / "summaries.csv", mio.format_summaries_csv(summaries, counts))
    mio.write_json(out / "posterior.json", _posterior_doc(state, counts), kind="filter-posterior")
    _write_timing(out, filter_seconds=elapsed, particles=model.n_particles, steps=counts.T)
    return [str(out / "summaries.csv"), str(out / "posterior.json"), *written]


def _chain(task):
    counts, model, g, seed = task
    return ffbs.gibbs_run(counts, model, g, np.random.default_rng(seed))


def run_smooth(cfg: RunConfig) -> List[str]:
    """Gibbs/FFBS smoothing; chains use seeds seed, seed+1, ... and are pooled."""
    counts = _require_input(cfg)
    out = Path(cfg.out)
    model = cfg.model_config(counts.J)
    g = cfg.gibbs_config()
    t0 = time.perf_counter()
    chains = _fan_out(_chain, [(counts, model, g, cfg.seed + k) for k in range(cfg.n_chains)])
    elapsed = time.perf_counter() - t0
    draws = ffbs.PosteriorDraws(
        np.concatenate([c.theta_paths for c in chains]),
        np.concatenate([c.lambda_draws for c in chains]),
        counts.series_labels,
    )
    sm = ffbs.smoothed_summary(draws)
    mio.atomic_write_text(out / "draws.csv", mio.format_draws_csv(draws, counts.time_labels))
    mio.atomic_write_text(out / "smoothed.csv", mio.format_smoothed_csv(sm, counts))
    mio.write_json(
        out / "smooth_posterior.json",
        {"series_labels": list(counts.series_labels), "lambda_mean": sm["lambda_mean"], "lambda_q": sm["lambda_q"],
         "quantiles": list(ffbs.QUANTILES), "gamma": g.fixed_gamma, "n_draws": draws.n_draws,
         "n_chains": cfg.n_chains, "lambda_lag1_autocorrelation": [ffbs.lag1_autocorrelation(c.lambda_draws) for c in chains]},
        kind="smooth-posterior",
    )
    _write_timing(out, smooth_seconds=elapsed, iterations=g.n_iter, chains=cfg.n_chains)
    return [str(out / "draws.csv"), str(out / "smoothed.csv"), str(out / "smooth_posterior.json")]


def run_eval(cfg: RunConfig) -> str:
    """Score fitted rates (summaries.csv or smoothed.csv) against the observed counts."""
    counts = _require_input(cfg)
    if not cfg.fitted:
        raise ConfigError("eval needs a fitted summaries file (--fitted)")
    mean, iv, theta = mio.read_fitted_csv(cfg.fitted, counts)
    lam_iv = truth = None
    if cfg.trace and cfg.posterior:
        trace = mio.read_json(cfg.trace, kind="trace")
        post = mio.read_json(cfg.posterior)
        q = np.asarray(post["lambda_q"], dtype=float)
        lam_iv = np.stack([q[0], q[-1]], axis=-1)
        truth = trace["config"]["true_lambdas"]
        if len(truth) != counts.J:
            raise DataError("trace and counts disagree on the number of series")
    report = metrics.evaluate(counts, mean, iv, theta, lam_iv, truth)
    path = Path(cfg.out) / "report.json"
    mio.write_json(path, report.to_dict(), kind="eval-report")
    return str(path)


def run_bench(cfg: RunConfig) -> dict:
    """Time the filter at N=1000, J=5, T=40 on a simulated set."""
    trace = simulate(cfg.true_lambdas, cfg.true_gamma, cfg.alpha0, cfg.beta0, cfg.T, seed=cfg.seed)
    model = cfg.model_config(trace.counts.J)
    t0 = time.perf_counter()
    pl.run(trace.counts, model)
    elapsed = time.perf_counter() - t0
    result = {
        "filter_seconds": elapsed,
        "particles": model.n_particles,
        "J": trace.counts.J,
        "T": trace.counts.T,
        "propagation": model.propagation,
        "reference_seconds": REFERENCE_SECONDS,
        "reference_note": "reference timing for the same problem size on other hardware; informational only",
    }
    mio.write_json(Path(cfg.out) / "bench.json", result, kind="bench")
    print(f"filter N={model.n_particles} J={trace.counts.J} T={trace.counts.T}: {elapsed:.2f} s "
          f"(reference {REFERENCE_SECONDS} s, informational)")
    return result


COMMANDS = {"simulate": run_simulate, "filter": run_filter, "smooth": run_smooth, "eval": run_eval, "bench": run_bench}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpsb", description="Multivariate Poisson-scaled beta count models.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--input", help="count CSV (filter, smooth, eval)")
    p.add_argument("--particles", type=int, dest="n_particles")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="fix the discount factor")
    g.add_argument("--gamma-grid", type=int, dest="gamma_grid", metavar="K", help="learn gamma on a K-point grid")
    p.add_argument("--propagation", choices=["hgb", "sis"])
    p.add_argument("--fitted", help="summaries.csv or smoothed.csv to evaluate")
    p.add_argument("--resume", help="checkpoint to continue filtering from")
    p.add_argument("--checkpoints", action="store_true", dest="emit_checkpoints", default=None,
                   help="write filter checkpoints")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> RunConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc.pop("version", None)
    for name in ("seed", "out", "input", "n_particles", "gamma", "gamma_grid", "propagation", "fitted", "resume",
                 "emit_checkpoints"):
        value = getattr(args, name)
        if value is not None:
            doc[name] = value
    if args.gamma_grid is not None:
        doc["gamma"] = None
    return RunConfig.from_dict(doc)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"mpsb: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"mpsb: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateFilterError, ConvergenceError, SamplerInefficiencyError, FloatingPointError) as exc:
        print(f"mpsb: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"mpsb: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
