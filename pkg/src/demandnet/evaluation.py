"""Metrics, classical baselines, and the two experiment protocols.

Metric aggregation is fixed throughout: compute the metric per forecast
origin, then take arithmetic means across origins, then series, then seeds.
Baselines are tuned per (series, horizon) on the validation range with
labels clipped at the validation boundary so nothing leaks from the test
range.  All modeling happens in per-series normalized units; denormalized
errors are carried alongside for interpretability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import SeriesBundle, fit_norm_stats, split_time
from .forecaster import ForecasterModel, mc_forecast_batch
from .pipeline import PipelineConfig, prepare_bundle, train_demandnet

log = logging.getLogger(__name__)

EXP_SMOOTHING_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
EXP_SMOOTHING_BETAS = (0.05, 0.1, 0.2, 0.4)
AR_ORDERS = (1, 2, 3, 7, 14)

DEMANDNET_METHODS = {
    "demandnet": None,  # use the configured cell
    "demandnet-lstm": "lstm",
    "demandnet-gru": "gru",
}
CLASSICAL_METHODS = ("exp_smoothing", "ar", "seasonal_naive")


# ----------------------------------------------------------------------------
# Point metrics


def mae(pred, truth) -> float:
    """Mean absolute error."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    """Root mean squared error."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pred_sd(samples) -> float:
    """Population standard deviation of a set of sampled predictions."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1:
        raise ValueError("need at least one sample")
    return float(samples.std())


# ----------------------------------------------------------------------------
# Classical baselines


def exp_smoothing_forecast(history, alpha: float, horizon: int,
                           beta: float | None = None,
                           initial_level: float | None = None) -> np.ndarray:
    """Exponential smoothing forecast: simple (flat) or Holt (trended).

    Simple: level starts at ``initial_level`` (default: first observation)
    and is updated through every observation; the forecast repeats the final
    level.  Holt: level starts at the first observation, trend at the first
    difference, updates run from the second observation on, and the forecast
    extrapolates ``level + m * trend``.
    """
    x = np.asarray(history, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("history must be a non-empty 1-D array")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if beta is None:
        level = float(x[0]) if initial_level is None else float(initial_level)
        for value in x:
            level = alpha * value + (1.0 - alpha) * level
        return np.full(horizon, level)
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if x.size < 2:
        raise ValueError("Holt smoothing needs at least two observations")
    level = float(x[0])
    trend = float(x[1] - x[0])
    for value in x[1:]:
        new_level = alpha * value + (1.0 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1.0 - beta) * trend
        level = new_level
    return level + trend * np.arange(1, horizon + 1, dtype=float)


def seasonal_naive_forecast(history, horizon: int, period: int = 7) -> np.ndarray:
    """Repeat the last full seasonal cycle."""
    x = np.asarray(history, dtype=float)
    if x.size < period:
        raise ValueError(f"need at least {period} observations, got {x.size}")
    cycle = x[-period:]
    reps = int(np.ceil(horizon / period))
    return np.tile(cycle, reps)[:horizon]


def ar_forecast(history, p: int, horizon: int, ridge: float = 1e-6) -> np.ndarray:
    """AR(p) on first differences, least squares with intercept, iterated
    forward and re-integrated.

    A perfectly regular ramp (constant differences) short-circuits to exact
    continuation.  Ill-conditioned normal equations fall back to a small
    ridge, logged.
    """
    x = np.asarray(history, dtype=float)
    if p < 1:
        raise ValueError("p must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if x.size < p + 2:
        raise ValueError(f"need at least {p + 2} observations for AR({p}), got {x.size}")
    d = np.diff(x)
    if np.ptp(d) == 0.0:
        future = np.full(horizon, d[-1])
        return x[-1] + np.cumsum(future)
    rows = d.size - p
    A = np.empty((rows, p + 1))
    A[:, 0] = 1.0
    for lag in range(1, p + 1):
        A[:, lag] = d[p - lag : d.size - lag]
    y = d[p:]
    G = A.T @ A
    rhs = A.T @ y
    use_ridge = False
    try:
        if np.linalg.cond(G) > 1e12:
            use_ridge = True
        else:
            coef = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        use_ridge = True
    if use_ridge:
        log.debug("AR(%d) normal equations ill-conditioned; ridge fallback", p)
        coef = np.linalg.solve(G + ridge * np.eye(p + 1), rhs)
    state = d[-p:][::-1].copy()  # most recent difference first
    future = np.empty(horizon)
    for m in range(horizon):
        nxt = coef[0] + coef[1:] @ state
        future[m] = nxt
        state[1:] = state[:-1]
        state[0] = nxt
    return x[-1] + np.cumsum(future)


def _clipped_score(series: np.ndarray, origins, horizon: int, limit: int, forecast_fn) -> float:
    """Mean per-origin MAE with labels clipped at ``limit`` (no leakage)."""
    scores = []
    for t in origins:
        h_eff = min(horizon, limit - t)
        if h_eff < 1:
            continue
        pred = forecast_fn(series[:t], h_eff)
        scores.append(float(np.mean(np.abs(pred - series[t : t + h_eff]))))
    if not scores:
        raise ValueError("no scorable validation origins")
    return float(np.mean(scores))


def tune_exp_smoothing(series, origins, horizon: int, limit: int,
                       alphas=EXP_SMOOTHING_ALPHAS, betas=EXP_SMOOTHING_BETAS):
    """Grid-search (alpha, beta-or-None) by validation MAE; first best wins."""
    series = np.asarray(series, dtype=float)
    best, best_score = None, np.inf
    for alpha in alphas:
        for beta in (None, *betas):
            score = _clipped_score(
                series, origins, horizon, limit,
                lambda h, m, a=alpha, b=beta: exp_smoothing_forecast(h, a, m, beta=b),
            )
            if score < best_score:
                best, best_score = (alpha, beta), score
    return best


def tune_ar(series, origins, horizon: int, limit: int, orders=AR_ORDERS) -> int:
    """Pick the AR order with the best clipped validation MAE."""
    series = np.asarray(series, dtype=float)
    best, best_score = None, np.inf
    for p in orders:
        try:
            score = _clipped_score(
                series, origins, horizon, limit,
                lambda h, m, p=p: ar_forecast(h, p, m),
            )
        except ValueError:
            continue
        if score < best_score:
            best, best_score = p, score
    if best is None:
        raise ValueError("no AR order could be scored on the validation range")
    return best


# ----------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class MetricSet:
    """Aggregated metrics for one (method, horizon) cell."""

    method: str
    horizon: int
    mae: float
    rmse: float
    sd: float  # mean predictive SD; nan for point baselines
    n: int  # forecast origins aggregated (across series and seeds)
    mae_denorm: float = float("nan")
    rmse_denorm: float = float("nan")
    per_seed_mae: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentReport:
    """All cells of one protocol run plus enough context to replay it."""

    protocol: str
    methods: tuple[str, ...]
    horizons: tuple[int, ...]
    seeds: tuple[int, ...]
    cells: dict
    config_snapshot: dict = field(default_factory=dict)
    # (method, seed) -> (hash before eval, hash after); evaluation must not
    # touch parameters, so the pair is expected to be equal
    param_hashes: dict = field(default_factory=dict)

    def metric(self, method: str, horizon: int) -> MetricSet:
        try:
            return self.cells[(method, horizon)]
        except KeyError:
            raise KeyError(f"no cell for method={method!r} horizon={horizon}")

    def to_csv_text(self, denormalized: bool = False) -> str:
        seeds_txt = ";".join(str(s) for s in self.seeds)
        lines = ["protocol,method,horizon,mae,rmse,sd,seeds"]
        for method in self.methods:
            for h in self.horizons:
                cell = self.cells[(method, h)]
                m = cell.mae_denorm if denormalized else cell.mae
                r = cell.rmse_denorm if denormalized else cell.rmse
                sd_txt = "" if np.isnan(cell.sd) or denormalized else repr(float(cell.sd))
                lines.append(
                    f"{self.protocol},{method},{h},{repr(float(m))},"
                    f"{repr(float(r))},{sd_txt},{seeds_txt}"
                )
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        """Fixed-width MAE/RMSE table, methods down, horizons across."""
        name_w = max(12, *(len(m) for m in self.methods)) + 2
        col_w = 16
        out = [f"protocol: {self.protocol}   seeds: {list(self.seeds)}"]
        header = "method".ljust(name_w) + "".join(
            f"H={h} (mae/rmse)".rjust(col_w) for h in self.horizons
        )
        out.append(header)
        out.append("-" * len(header))
        for method in self.methods:
            row = method.ljust(name_w)
            for h in self.horizons:
                cell = self.cells[(method, h)]
                row += f"{cell.mae:.4f}/{cell.rmse:.4f}".rjust(col_w)
            out.append(row)
        return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# Per-series evaluation internals


def _per_origin_rows(horizons, origins, length):
    return {h: [i for i, t in enumerate(origins) if t + h <= length] for h in horizons}


class _Accumulator:
    """per-origin -> mean over origins -> mean over series -> mean over seeds."""

    def __init__(self):
        self.by_seed: dict = {}

    def add_series(self, seed, values: dict):
        self.by_seed.setdefault(seed, []).append(values)

    def finalize(self, method, horizon) -> MetricSet:
        per_seed = {k: [] for k in ("mae", "rmse", "sd", "mae_denorm", "rmse_denorm")}
        seed_mae = {}
        n = 0
        for seed, series_rows in sorted(self.by_seed.items()):
            for key in per_seed:
                per_seed[key].append(float(np.mean([row[key] for row in series_rows])))
            seed_mae[seed] = per_seed["mae"][-1]
            n += sum(row["n"] for row in series_rows)
        return MetricSet(
            method=method,
            horizon=horizon,
            mae=float(np.mean(per_seed["mae"])),
            rmse=float(np.mean(per_seed["rmse"])),
            sd=float(np.mean(per_seed["sd"])),
            n=n,
            mae_denorm=float(np.mean(per_seed["mae_denorm"])),
            rmse_denorm=float(np.mean(per_seed["rmse_denorm"])),
            per_seed_mae=seed_mae,
        )


def _series_metrics(mean_paths, sd_paths, truths, scale) -> dict:
    """Aggregate per-origin metrics for one (series, horizon) block."""
    maes = [mae(m, t) for m, t in zip(mean_paths, truths)]
    rmses = [rmse(m, t) for m, t in zip(mean_paths, truths)]
    sds = [float(np.mean(s)) for s in sd_paths] if sd_paths is not None else [float("nan")]
    return {
        "mae": float(np.mean(maes)),
        "rmse": float(np.mean(rmses)),
        "sd": float(np.mean(sds)),
        "mae_denorm": float(np.mean(maes)) * scale,
        "rmse_denorm": float(np.mean(rmses)) * scale,
        "n": len(maes),
    }


def demandnet_eval_bundle(model: ForecasterModel, bundle: SeriesBundle,
                          cfg: PipelineConfig, horizons, kappa: int,
                          seed: int, p: float | None = None) -> dict:
    """Forecast every valid test-range origin of one series in one batch.

    Returns {horizon: per-series metric row}.  Stats come from the model
    when it trained on this series, otherwise they are fitted afresh on the
    bundle's own training fraction (the unseen-series convention).
    """
    split = split_time(bundle.length, cfg.fractions)
    stats = model.norm_stats.get(bundle.id)
    if stats is None:
        stats = fit_norm_stats(bundle, split, identity_channels=(model.policy_channel,))
    nb = stats.normalize_bundle(bundle)
    panel = nb.channel_matrix()
    H = model.arch.horizon
    h_min = min(horizons)
    first = max(split.test.start, model.tau)
    origins = list(range(first, bundle.length - h_min + 1))
    if not origins:
        raise ValueError(f"series {bundle.id}: no valid test origins for h={h_min}")
    windows = np.stack([panel[t - model.tau : t] for t in origins])
    raw_policy = bundle.policy
    policies = np.stack([
        np.pad(raw_policy[t : t + H], (0, max(0, t + H - bundle.length)), mode="edge")
        for t in origins
    ])
    samples = mc_forecast_batch(model, windows, policies, kappa=kappa, p=p, seed=seed)
    means = samples.mean(axis=0)
    if bool((samples == samples[0]).all()):
        sds = np.zeros_like(means)
    else:
        sds = samples.std(axis=0)
    rows = {}
    valid = _per_origin_rows(horizons, origins, bundle.length)
    for h in horizons:
        idx = valid[h]
        if not idx:
            continue
        mean_paths = [means[i, :h] for i in idx]
        sd_paths = [sds[i, :h] for i in idx]
        truths = [nb.target[origins[i] : origins[i] + h] for i in idx]
        rows[h] = _series_metrics(mean_paths, sd_paths, truths, float(stats.scale[0]))
    return rows


def classical_eval_bundle(bundle: SeriesBundle, cfg: PipelineConfig,
                          horizons, method: str) -> dict:
    """Tune on the validation range, forecast every valid test origin."""
    split, stats, nb = prepare_bundle(bundle, cfg)
    series = nb.target
    scale = float(stats.scale[0])
    val_origins = range(split.validation.start, split.validation.stop)
    limit = split.validation.stop
    rows = {}
    for h in horizons:
        if method == "exp_smoothing":
            alpha, beta = tune_exp_smoothing(series, val_origins, h, limit)
            fn = lambda hist, m, a=alpha, b=beta: exp_smoothing_forecast(hist, a, m, beta=b)
        elif method == "ar":
            p = tune_ar(series, val_origins, h, limit)
            fn = lambda hist, m, p=p: ar_forecast(hist, p, m)
        elif method == "seasonal_naive":
            fn = seasonal_naive_forecast
        else:
            raise ValueError(f"unknown classical method {method!r}")
        origins = [t for t in range(split.test.start, bundle.length - h + 1)]
        if not origins:
            continue
        mean_paths = [fn(series[:t], h) for t in origins]
        truths = [series[t : t + h] for t in origins]
        rows[h] = _series_metrics(mean_paths, None, truths, scale)
    return rows


# ----------------------------------------------------------------------------
# Protocols


def _check_methods(methods):
    for m in methods:
        if m not in DEMANDNET_METHODS and m not in CLASSICAL_METHODS:
            raise ValueError(
                f"unknown method {m!r}; known: "
                f"{sorted(DEMANDNET_METHODS) + list(CLASSICAL_METHODS)}"
            )


def _run_protocol(protocol: str, train_bundles, eval_bundles, methods, horizons,
                  seeds, cfg: PipelineConfig) -> ExperimentReport:
    _check_methods(methods)
    methods = tuple(methods)
    horizons = tuple(sorted(set(int(h) for h in horizons)))
    seeds = tuple(int(s) for s in seeds)
    if max(horizons) > cfg.model_horizon:
        raise ValueError(
            f"horizon {max(horizons)} exceeds configured model horizon {cfg.model_horizon}"
        )
    acc = {(m, h): _Accumulator() for m in methods for h in horizons}
    param_hashes: dict = {}

    classical_cache: dict = {}
    for method in methods:
        if method in CLASSICAL_METHODS:
            for bundle in eval_bundles:
                classical_cache[(method, bundle.id)] = classical_eval_bundle(
                    bundle, cfg, horizons, method
                )

    for seed in seeds:
        for method in methods:
            if method in CLASSICAL_METHODS:
                for bundle in eval_bundles:
                    rows = classical_cache[(method, bundle.id)]
                    for h, row in rows.items():
                        acc[(method, h)].add_series(seed, row)
                continue
            cell = DEMANDNET_METHODS[method]
            trained = train_demandnet(train_bundles, cfg, seed=seed, cell=cell)
            hash_pre = trained.forecaster.param_hash()
            for bundle in eval_bundles:
                rows = demandnet_eval_bundle(
                    trained.forecaster, bundle, cfg, horizons,
                    kappa=cfg.kappa, seed=seed,
                )
                for h, row in rows.items():
                    acc[(method, h)].add_series(seed, row)
            param_hashes[(method, seed)] = (hash_pre, trained.forecaster.param_hash())

    cells = {
        (m, h): acc[(m, h)].finalize(m, h)
        for m in methods for h in horizons
        if acc[(m, h)].by_seed
    }
    return ExperimentReport(
        protocol=protocol,
        methods=methods,
        horizons=horizons,
        seeds=seeds,
        cells=cells,
        config_snapshot=cfg.snapshot(),
        param_hashes=param_hashes,
    )


def run_split80(bundles, methods, horizons, seeds, cfg: PipelineConfig) -> ExperimentReport:
    """Train on every series' first 80%, evaluate on each one's last 10%."""
    return _run_protocol("split80", bundles, bundles, methods, horizons, seeds, cfg)


def run_unseen(bundles, held_ids, methods, horizons, seeds, cfg: PipelineConfig) -> ExperimentReport:
    """Hold entire series out of training and forecast them cold.

    DemandNet methods train on the remaining series only; the held-out
    series are normalized by their own training-fraction stats at forecast
    time.  Classical baselines only ever see the evaluated series' own
    history, so their cells match the split80 protocol by construction.
    """
    from .data import holdout_series

    train_bundles, held_bundles = holdout_series(bundles, held_ids)
    return _run_protocol("unseen", train_bundles, held_bundles, methods, horizons, seeds, cfg)
