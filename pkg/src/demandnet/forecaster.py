"""Multi-step recurrent demand forecaster with a policy skip connection and
Monte-Carlo-dropout uncertainty.

The recurrent stack reads a (tau, channels) history window and emits the
whole horizon in one linear readout.  A policy skip connection adds the
effects model's predicted demand shift for the announced future policy path
directly to the base forecast; the shift is constant with respect to the
forecaster's parameters, so training sees adjusted forecasts while gradients
flow only through the recurrent stack.  Uncertainty comes from repeating the
forward pass under freshly sampled dropout masks held fixed across time
within each pass.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .data import DatasetSplit, NormStats, SeriesBundle, fit_norm_stats, make_windows, split_time
from .effects import EffectModel, PolynomialFit, policy_delta
from .nn.checkpoint import (
    load_checkpoint,
    load_params_from_arrays,
    params_to_arrays,
    save_checkpoint,
)
from .nn.layers import DenseLayer, sample_dropout_mask
from .nn.loss import add_penalty_grads, mse_grad, penalized_loss
from .nn.optim import DivergenceError, TrainConfig, make_optimizer
from .nn.recurrent import RecurrentStack
from .rngs import stream

ADJUST_MODES = ("additive", "multiplicative")


@dataclass(frozen=True)
class ForecasterArch:
    """Shape of the forecaster: cell kind, stack size, horizon, skip mode."""

    cell: str = "gru"
    hidden: int = 128
    layers: int = 2
    horizon: int = 80
    dropout: float = 0.1
    use_policy_skip: bool = True
    adjust_mode: str = "additive"
    reference_policy: float = 0.0

    def __post_init__(self):
        if self.cell not in ("lstm", "gru"):
            raise ValueError(f"cell must be 'lstm' or 'gru', got {self.cell!r}")
        if self.hidden < 1 or self.layers < 1 or self.horizon < 1:
            raise ValueError("hidden, layers, and horizon must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.adjust_mode not in ADJUST_MODES:
            raise ValueError(f"adjust_mode must be one of {ADJUST_MODES}")
        if not 0.0 <= self.reference_policy <= 1.0:
            raise ValueError("reference_policy must be in [0, 1]")


@dataclass(frozen=True)
class PolicyVector:
    """An announced future policy path over the forecast horizon."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"policy vector must be 1-D, got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("policy values must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ForecastDistribution:
    """kappa Monte-Carlo sample paths with their mean and spread per step."""

    samples: np.ndarray  # (kappa, H)
    mean: np.ndarray  # (H,)
    sd: np.ndarray  # (H,)
    p: float
    kappa: int

    def __post_init__(self):
        for name in ("samples", "mean", "sd"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.samples.shape != (self.kappa, self.mean.shape[0]):
            raise ValueError("samples shape inconsistent with kappa and horizon")

    @property
    def horizon(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class ForecasterTraining:
    train_history: tuple[float, ...]
    val_history: tuple[float, ...]
    best_epoch: int


def _as_policy_array(policies, horizon: int) -> np.ndarray:
    if isinstance(policies, PolicyVector):
        values = policies.values
    else:
        values = np.asarray(policies, dtype=float)
    if values.shape != (horizon,):
        raise ValueError(f"expected a length-{horizon} policy path, got shape {values.shape}")
    return values


def apply_adjustment(base: np.ndarray, delta: np.ndarray, mode: str) -> np.ndarray:
    """Combine the base forecast with the policy shift."""
    if mode == "additive":
        return base + delta
    if mode == "multiplicative":
        return base * (1.0 + delta)
    raise ValueError(f"adjust_mode must be one of {ADJUST_MODES}, got {mode!r}")


def demand_cell_adjust(base, policies, effect_model: EffectModel,
                       reference: float = 0.0, mode: str = "additive"):
    """Shift base forecast(s) by the effect model's predicted policy impact.

    ``policies`` aligns elementwise with ``base``; the shift for step t is
    the effects curve at the announced policy minus the curve at the
    reference level.
    """
    base = np.asarray(base, dtype=float)
    pol = policies.values if isinstance(policies, PolicyVector) else np.asarray(policies, float)
    if pol.shape != base.shape:
        raise ValueError(f"policies shape {pol.shape} != base shape {base.shape}")
    delta = policy_delta(effect_model, pol, reference)
    return apply_adjustment(base, np.asarray(delta, dtype=float), mode)


class ForecasterModel:
    """Recurrent stack + direct multi-horizon readout + policy skip."""

    kind = "forecaster"

    def __init__(self, arch: ForecasterArch, tau: int, channel_names,
                 policy_channel: int, effect_model: EffectModel | None = None,
                 rng: np.random.Generator | None = None, lam: float = 0.0):
        if tau < 1:
            raise ValueError("tau must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.arch = arch
        self.tau = tau
        self.channel_names = tuple(channel_names)
        self.policy_channel = policy_channel
        if not 0 < policy_channel < len(self.channel_names):
            raise ValueError("policy_channel must index a covariate column")
        if arch.use_policy_skip and effect_model is None:
            raise ValueError("policy skip requires an effect model")
        self.effect_model = effect_model
        self.lam = lam
        widths = (arch.hidden,) * arch.layers
        self.stack = RecurrentStack(arch.cell, len(self.channel_names), widths, rng, name="fore")
        self.readout = DenseLayer(arch.hidden, arch.horizon, "identity", rng, name="fore.out")
        self.mc_p: float | None = None
        self.norm_stats: dict[str, NormStats] = {}
        self.mean_policy: np.ndarray | None = None
        self.training: ForecasterTraining | None = None

    def parameters(self):
        return self.stack.parameters() + self.readout.parameters()

    def param_hash(self) -> str:
        digest = hashlib.sha256()
        for p in self.parameters():
            digest.update(p.name.encode())
            digest.update(str(p.value.shape).encode())
            digest.update(np.ascontiguousarray(p.value).tobytes())
        return digest.hexdigest()

    def _forward_base(self, windows: np.ndarray, masks=None, cache: bool = False) -> np.ndarray:
        W = np.asarray(windows, dtype=float)
        if W.ndim != 3 or W.shape[1] != self.tau or W.shape[2] != len(self.channel_names):
            raise ValueError(
                f"expected (*, {self.tau}, {len(self.channel_names)}) windows, "
                f"got shape {W.shape}"
            )
        X = W.transpose(1, 0, 2)
        H = self.stack.forward(X, masks=masks, cache=cache)
        return self.readout.forward(H[-1], cache=cache)

    def _backward_base(self, dbase: np.ndarray):
        dh = self.readout.backward(dbase)
        dH = np.zeros((self.tau, dh.shape[0], self.arch.hidden))
        dH[-1] = dh
        self.stack.backward(dH)

    def policy_deltas(self, policies: np.ndarray) -> np.ndarray:
        """Per-step demand shifts for a (..., H) array of future policies."""
        policies = np.asarray(policies, dtype=float)
        if not self.arch.use_policy_skip or self.effect_model is None:
            return np.zeros_like(policies)
        return np.asarray(
            policy_delta(self.effect_model, policies, self.arch.reference_policy),
            dtype=float,
        )

    def loss(self, batch, with_grads: bool = False) -> float:
        """Deterministic training loss (MSE after adjustment + L2 penalty)."""
        windows, policies, labels = batch
        delta = self.policy_deltas(np.asarray(policies, dtype=float))
        return self._loss_with_delta(windows, delta, labels, with_grads=with_grads)

    def _loss_with_delta(self, windows, delta, labels, masks=None,
                         with_grads: bool = False) -> float:
        labels = np.asarray(labels, dtype=float)
        base = self._forward_base(windows, masks=masks, cache=with_grads)
        adjusted = apply_adjustment(base, delta, self.arch.adjust_mode)
        weights = [p for p in self.parameters() if p.penalized]
        value = penalized_loss(adjusted, labels, weights, self.lam)
        if with_grads:
            dadj = mse_grad(adjusted, labels)
            dbase = dadj if self.arch.adjust_mode == "additive" else dadj * (1.0 + delta)
            self._backward_base(dbase)
            add_penalty_grads(self.parameters(), self.lam)
        return value

    def mean_policy_at(self, origin: int, horizon: int) -> np.ndarray:
        """Cross-series mean training policy path at matching absolute offsets."""
        if self.mean_policy is None:
            raise ValueError("model has no stored mean policy trajectory")
        idx = np.minimum(np.arange(origin, origin + horizon), self.mean_policy.size - 1)
        return self.mean_policy[idx]


def _val_windows(samples, split: DatasetSplit, horizon: int):
    """Windows whose labels fall entirely inside the validation range."""
    return [
        s for s in samples
        if s.origin >= split.validation.start and s.origin + horizon <= split.validation.stop
    ]


def train_forecaster(bundles: list[SeriesBundle], config: TrainConfig,
                     arch: ForecasterArch, effect_model: EffectModel | None,
                     tau: int, fractions=(0.8, 0.1, 0.1)) -> ForecasterModel:
    """Train on pooled windows from every bundle's training range.

    Each bundle is z-scored from its own training range (policy channel kept
    raw); the policy shift is precomputed per window since it never depends
    on the forecaster's parameters.  The returned model carries the
    best-validation parameters, per-series normalization stats, and the mean
    training policy trajectory (for dummy-policy forecasts on unseen series).
    """
    if not bundles:
        raise ValueError("no bundles to train on")
    channel_names = bundles[0].channel_names()
    policy_channel = 1 + bundles[0].policy_index
    for b in bundles:
        if b.channel_names() != channel_names or 1 + b.policy_index != policy_channel:
            raise ValueError(f"series {b.id} disagrees on channels or policy column")

    train_parts, val_parts = [], []
    norm_stats: dict[str, NormStats] = {}
    max_len = max(b.length for b in bundles)
    policy_sum = np.zeros(max_len)
    policy_count = np.zeros(max_len)
    for b in bundles:
        split = split_time(b.length, fractions)
        stats = fit_norm_stats(b, split, identity_channels=(policy_channel,))
        norm_stats[b.id] = stats
        nb = stats.normalize_bundle(b)
        samples = make_windows(nb, tau, arch.horizon)
        train_parts.extend(s for s in samples if s.origin + arch.horizon <= split.train.stop)
        val_parts.extend(_val_windows(samples, split, arch.horizon))
        policy_sum[: b.length] += b.policy
        policy_count[: b.length] += 1.0
    if not train_parts:
        raise ValueError(f"no training windows: series too short for tau={tau} "
                         f"horizon={arch.horizon}")

    def _stack(parts):
        W = np.stack([s.window for s in parts])
        P = np.stack([s.future_policies for s in parts])
        Y = np.stack([s.label for s in parts])
        return W, P, Y

    W_tr, P_tr, Y_tr = _stack(train_parts)
    has_val = bool(val_parts)
    if has_val:
        W_va, P_va, Y_va = _stack(val_parts)

    model = ForecasterModel(
        arch, tau, channel_names, policy_channel, effect_model=effect_model,
        rng=stream(config.seed, "forecaster", "init"), lam=config.weight_decay,
    )
    model.norm_stats = norm_stats
    model.mean_policy = policy_sum / np.maximum(policy_count, 1.0)

    delta_tr = model.policy_deltas(P_tr)
    delta_va = model.policy_deltas(P_va) if has_val else None

    params = model.parameters()
    optimizer = make_optimizer(config.optimizer, params, config.learning_rate)
    n = W_tr.shape[0]
    widths = (arch.hidden,) * arch.layers
    train_history, val_history = [], []
    best = ([p.value.copy() for p in params], np.inf, -1)
    for epoch in range(config.epochs):
        order = stream(config.seed, "forecaster", "shuffle", epoch).permutation(n)
        epoch_loss, batches = 0.0, 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            rows = order[start : start + config.batch_size]
            masks = None
            if arch.dropout > 0.0:
                masks = [
                    sample_dropout_mask(
                        (rows.size, w), arch.dropout,
                        stream(config.seed, "forecaster", "dropout", epoch, step, l),
                    ).values
                    for l, w in enumerate(widths)
                ]
            for p in params:
                p.zero_grad()
            value = model._loss_with_delta(
                W_tr[rows], delta_tr[rows], Y_tr[rows], masks=masks, with_grads=True
            )
            if not np.isfinite(value):
                raise DivergenceError(f"forecaster loss became non-finite at epoch {epoch}")
            optimizer.step()
            epoch_loss += value
            batches += 1
        train_history.append(epoch_loss / batches)
        if has_val:
            score = model._loss_with_delta(W_va, delta_va, Y_va, with_grads=False)
        else:
            score = model._loss_with_delta(W_tr, delta_tr, Y_tr, with_grads=False)
        val_history.append(score)
        if score < best[1]:
            best = ([p.value.copy() for p in params], score, epoch)
    for p, value in zip(params, best[0]):
        p.value[...] = value
    model.training = ForecasterTraining(
        train_history=tuple(train_history),
        val_history=tuple(val_history),
        best_epoch=best[2],
    )
    return model


# ----------------------------------------------------------------------------
# Monte-Carlo dropout forecasting


def _resolve_p(model: ForecasterModel, p) -> float:
    if p is not None:
        value = float(p)
    elif model.mc_p is not None:
        value = model.mc_p
    else:
        value = model.arch.dropout
    if not 0.0 <= value < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {value}")
    return value


def mc_forecast_batch(model: ForecasterModel, windows: np.ndarray, policies: np.ndarray,
                      kappa: int = 100, p: float | None = None, seed: int = 0) -> np.ndarray:
    """(kappa, N, H) adjusted sample paths for N windows in one batched pass.

    Pass k draws its masks from the pre-assigned stream ``(seed, "mc-pass",
    k)`` and applies the same network realization to every window, so the
    result for window n is bit-identical to a single-window call with the
    same seed.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    p_used = _resolve_p(model, p)
    W = np.asarray(windows, dtype=float)
    P = np.asarray(policies, dtype=float)
    if W.ndim != 3:
        raise ValueError(f"expected (N, tau, C) windows, got shape {W.shape}")
    if P.shape != (W.shape[0], model.arch.horizon):
        raise ValueError(f"expected (N, {model.arch.horizon}) policies, got {P.shape}")
    N = W.shape[0]
    widths = model.stack.widths
    masks = None
    if p_used > 0.0:
        per_layer = [np.empty((kappa, w)) for w in widths]
        for k in range(kappa):
            rng = stream(seed, "mc-pass", k)
            for l, w in enumerate(widths):
                per_layer[l][k] = sample_dropout_mask((w,), p_used, rng).values
        masks = [np.repeat(rows, N, axis=0) for rows in per_layer]
    big = np.tile(W, (kappa, 1, 1))
    base = model._forward_base(big, masks=masks, cache=False).reshape(kappa, N, -1)
    delta = model.policy_deltas(P)
    return apply_adjustment(base, delta[None, :, :], model.arch.adjust_mode)


def _distribution(samples: np.ndarray, p: float, kappa: int) -> ForecastDistribution:
    mean = samples.mean(axis=0)
    if bool((samples == samples[0]).all()):
        # all passes drew identical paths (e.g. p = 0 or kappa = 1): the
        # spread is exactly zero, not a rounding residue
        mean = samples[0].copy()
        sd = np.zeros_like(mean)
    else:
        sd = samples.std(axis=0)
    return ForecastDistribution(samples=samples, mean=mean, sd=sd, p=p, kappa=kappa)


def mc_forecast(model: ForecasterModel, window: np.ndarray, policies,
                kappa: int = 100, p: float | None = None, seed: int = 0) -> ForecastDistribution:
    """Forecast one window: kappa dropout passes, mean and per-step spread."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError(f"expected a (tau, C) window, got shape {window.shape}")
    pol = _as_policy_array(policies, model.arch.horizon)
    p_used = _resolve_p(model, p)
    samples = mc_forecast_batch(model, window[None], pol[None], kappa, p_used, seed)[:, 0, :]
    return _distribution(samples, p_used, kappa)


def variance_vs_truth(dist: ForecastDistribution, truth: np.ndarray) -> np.ndarray:
    """Per-step mean squared deviation of the sample paths from the realized
    values (spread measured about the truth, not the sample mean)."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (dist.horizon,):
        raise ValueError(f"expected length-{dist.horizon} truth, got shape {truth.shape}")
    return np.mean((dist.samples - truth[None, :]) ** 2, axis=0)


def optimize_dropout(model: ForecasterModel, windows: np.ndarray, policies: np.ndarray,
                     truths: np.ndarray, candidates=(0.05, 0.1, 0.2, 0.35, 0.5),
                     kappa: int = 100, seed: int = 0) -> float:
    """Pick the dropout rate whose MC forecast distribution scores the best
    Gaussian log-likelihood on held-out windows; ties go to the smaller rate.

    The winner is stored on the model (``model.mc_p``) and returned.
    """
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ValueError("no dropout candidates given")
    if any(not 0.0 <= c < 1.0 for c in cands):
        raise ValueError(f"dropout candidates must be in [0, 1), got {cands}")
    W = np.asarray(windows, dtype=float)
    Y = np.asarray(truths, dtype=float)
    if W.shape[0] == 0:
        raise ValueError("no validation windows to score")
    best_p, best_nll = None, np.inf
    for cand in cands:
        samples = mc_forecast_batch(model, W, policies, kappa=kappa, p=cand, seed=seed)
        mean = samples.mean(axis=0)
        sd = np.zeros_like(mean) if cand == 0.0 else samples.std(axis=0)
        sigma = sd + 1e-6
        nll = float(np.mean(0.5 * np.log(2.0 * np.pi * sigma**2)
                            + (Y - mean) ** 2 / (2.0 * sigma**2)))
        if nll < best_nll:
            best_p, best_nll = cand, nll
    model.mc_p = best_p
    return best_p


def forecast_unseen(model: ForecasterModel, bundle: SeriesBundle,
                    policy_mode: str = "known", policies=None, origin: int | None = None,
                    kappa: int = 100, p: float | None = None, seed: int = 0,
                    fractions=(0.8, 0.1, 0.1)) -> ForecastDistribution:
    """Forecast a series the model never trained on; no parameter updates.

    The bundle is normalized by stats fitted on its own pre-forecast history
    (the training fraction of its timeline), keeping the scale convention
    identical to training.  ``policy_mode`` selects the future policy path:
    the bundle's recorded path ("known"), the cross-series mean training
    trajectory at the same calendar offsets ("dummy"), or a caller-supplied
    schedule ("scheduled").
    """
    if bundle.channel_names() != model.channel_names:
        raise ValueError(
            f"series {bundle.id} channels {bundle.channel_names()} do not match "
            f"the model's {model.channel_names}"
        )
    split = split_time(bundle.length, fractions)
    start = split.test.start if origin is None else int(origin)
    if start < model.tau:
        raise ValueError(f"origin {start} leaves no room for a tau={model.tau} window")
    if start > bundle.length:
        raise ValueError(f"origin {start} beyond series length {bundle.length}")
    H = model.arch.horizon
    if policy_mode == "known":
        if start + H > bundle.length:
            raise ValueError(
                f"known policies unavailable: origin {start} + horizon {H} "
                f"exceeds length {bundle.length}"
            )
        pol = bundle.policy[start : start + H]
    elif policy_mode == "dummy":
        pol = model.mean_policy_at(start, H)
    elif policy_mode == "scheduled":
        if policies is None:
            raise ValueError("policy_mode='scheduled' requires explicit policies")
        pol = _as_policy_array(policies, H)
    else:
        raise ValueError(f"unknown policy_mode {policy_mode!r}")
    stats = fit_norm_stats(bundle, split, identity_channels=(model.policy_channel,))
    nb = stats.normalize_bundle(bundle)
    window = nb.channel_matrix()[start - model.tau : start]
    return mc_forecast(model, window, pol, kappa=kappa, p=p, seed=seed)


# ----------------------------------------------------------------------------
# Checkpointing


def effects_meta(em: EffectModel | None):
    if em is None:
        return None
    fit = None
    if em.policy_fit is not None:
        fit = {
            "coefficients": [float(c) for c in em.policy_fit.coefficients],
            "degree": em.policy_fit.degree,
            "max_residual": em.policy_fit.max_residual,
        }
    return {
        "feature_names": list(em.feature_names),
        "widths": list(em.widths),
        "lam": em.lam,
        "policy_feature": em.policy_feature,
        "policy_fit": fit,
    }


def effects_to_arrays(em: EffectModel, prefix: str = "effects::") -> dict:
    arrays = {prefix + p.name: p.value.copy() for p in em.parameters()}
    arrays[prefix + "feature_means"] = em.feature_means.copy()
    return arrays


def effects_from_meta(meta: dict, arrays: dict, prefix: str = "effects::") -> EffectModel:
    em = EffectModel(
        tuple(meta["feature_names"]), tuple(meta["widths"]),
        lam=meta["lam"], policy_feature=meta["policy_feature"],
    )
    named = {
        name[len(prefix):]: arr for name, arr in arrays.items()
        if name.startswith(prefix)
    }
    load_params_from_arrays(em.parameters(), named)
    em.feature_means = np.asarray(named["feature_means"], dtype=float)
    if meta.get("policy_fit"):
        fit = meta["policy_fit"]
        em.policy_fit = PolynomialFit(
            coefficients=np.asarray(fit["coefficients"], dtype=float),
            degree=int(fit["degree"]),
            max_residual=float(fit["max_residual"]),
        )
    return em


def _stats_meta(stats: NormStats) -> dict:
    return {
        "location": [float(v) for v in stats.location],
        "scale": [float(v) for v in stats.scale],
        "constant": [bool(v) for v in stats.constant],
        "identity": [bool(v) for v in stats.identity],
        "fitted": [stats.fitted_range.start, stats.fitted_range.stop],
    }


def _stats_from_meta(meta: dict) -> NormStats:
    return NormStats(
        location=np.asarray(meta["location"], dtype=float),
        scale=np.asarray(meta["scale"], dtype=float),
        constant=np.asarray(meta["constant"], dtype=bool),
        identity=np.asarray(meta["identity"], dtype=bool),
        fitted_range=range(meta["fitted"][0], meta["fitted"][1]),
    )


def save_forecaster(model: ForecasterModel, path):
    """Write the complete forecaster (stack, readout, effects model, stats)."""
    meta = {
        "arch": asdict(model.arch),
        "tau": model.tau,
        "channel_names": list(model.channel_names),
        "policy_channel": model.policy_channel,
        "lam": model.lam,
        "mc_p": model.mc_p,
        "norm_stats": {sid: _stats_meta(s) for sid, s in model.norm_stats.items()},
        "effects": effects_meta(model.effect_model),
    }
    arrays = params_to_arrays(model.parameters())
    if model.mean_policy is not None:
        arrays["mean_policy"] = model.mean_policy.copy()
    if model.effect_model is not None:
        arrays.update(effects_to_arrays(model.effect_model))
    return save_checkpoint(path, "forecaster", meta, arrays)


def load_forecaster(path) -> ForecasterModel:
    """Rebuild a forecaster bit-exactly from its checkpoint."""
    meta, arrays = load_checkpoint(path, expected_kind="forecaster")
    em = effects_from_meta(meta["effects"], arrays) if meta.get("effects") else None
    arch = ForecasterArch(**meta["arch"])
    model = ForecasterModel(
        arch, meta["tau"], tuple(meta["channel_names"]), meta["policy_channel"],
        effect_model=em, lam=meta["lam"],
    )
    load_params_from_arrays(model.parameters(), arrays)
    model.mc_p = meta.get("mc_p")
    model.norm_stats = {
        sid: _stats_from_meta(m) for sid, m in meta["norm_stats"].items()
    }
    if "mean_policy" in arrays:
        model.mean_policy = np.asarray(arrays["mean_policy"], dtype=float)
    return model
