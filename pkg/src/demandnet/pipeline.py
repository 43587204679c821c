"""End-to-end assembly: from bundles to trained models.

This is the glue the experiment protocols, the CLI, and the scripts share:
per-series splits and normalization, pooled effects-model training data
(dynamic covariates plus screened statics), and the full train sequence
(effects model, forecaster, dropout-rate selection).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import SeriesBundle, fit_norm_stats, make_windows, split_time
from .effects import EffectModel, train_effect_model
from .features import CorrelationReport, SaeArch, filter_static
from .forecaster import ForecasterArch, ForecasterModel, optimize_dropout, train_forecaster
from .nn.optim import TrainConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the pipeline needs beyond the data itself.

    ``effects_train`` and ``forecaster_train`` default to the published
    operating point; experiment configs routinely override the optimizer,
    rate, and epoch budget to fit a desk-scale compute budget.
    """

    tau: int = 32
    horizons: tuple[int, ...] = (10, 20, 40, 80)
    kappa: int = 100
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    band: float = 0.3
    include_statics: bool = True
    dropout_candidates: tuple[float, ...] = (0.05, 0.1, 0.2, 0.35, 0.5)
    optimize_p: bool = True
    arch: ForecasterArch = ForecasterArch()
    forecaster_train: TrainConfig = TrainConfig(optimizer="adam")
    effects_train: TrainConfig = TrainConfig()
    effects_width: int = 64
    sae: SaeArch = SaeArch()
    sae_train: TrainConfig = TrainConfig(optimizer="adam")
    sae_threshold_ratio: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ValueError(f"horizons must be positive, got {self.horizons}")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.dropout_candidates is not None:
            object.__setattr__(
                self, "dropout_candidates",
                tuple(float(c) for c in self.dropout_candidates),
            )

    @property
    def model_horizon(self) -> int:
        return max(self.horizons)

    def snapshot(self) -> dict:
        return asdict(self)


def prepare_bundle(bundle: SeriesBundle, cfg: PipelineConfig):
    """Split, fit normalization stats (policy kept raw), normalize."""
    split = split_time(bundle.length, cfg.fractions)
    stats = fit_norm_stats(bundle, split, identity_channels=(1 + bundle.policy_index,))
    return split, stats, stats.normalize_bundle(bundle)


def screen_statics(bundles: list[SeriesBundle], cfg: PipelineConfig) -> CorrelationReport | None:
    """Run static screening when it is defined (3+ series with statics)."""
    if not cfg.include_statics:
        return None
    if len(bundles) < 3 or not bundles[0].static_profile:
        return None
    return filter_static(bundles, band=cfg.band)


def effect_training_data(bundles: list[SeriesBundle], cfg: PipelineConfig):
    """Pooled (X, y, feature_names, report) for the effects model.

    Rows are training-range time points of every bundle.  Features are the
    dynamic covariates in normalized units (policy raw) plus any retained
    static features z-scored across the training series.  The target is the
    per-series normalized demand.
    """
    if not bundles:
        raise ValueError("no bundles given")
    report = screen_statics(bundles, cfg)
    static_names = report.retained_names() if report is not None else ()
    if report is not None and not static_names:
        log.warning("static screening retained no features; using dynamics only")

    static_matrix = None
    if static_names:
        raw = np.array([[b.static_profile[n] for n in static_names] for b in bundles])
        loc = raw.mean(axis=0)
        scale = raw.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        static_matrix = (raw - loc) / scale

    X_rows, y_rows = [], []
    for i, bundle in enumerate(bundles):
        split, stats, nb = prepare_bundle(bundle, cfg)
        rows = nb.covariates[split.train.start : split.train.stop]
        if static_matrix is not None:
            rows = np.hstack([rows, np.tile(static_matrix[i], (rows.shape[0], 1))])
        X_rows.append(rows)
        y_rows.append(nb.target[split.train.start : split.train.stop])
    X = np.vstack(X_rows)
    y = np.concatenate(y_rows)
    feature_names = bundles[0].covariate_names + tuple(static_names)
    return X, y, feature_names, report


def train_effects_for(bundles: list[SeriesBundle], cfg: PipelineConfig,
                      seed: int | None = None):
    """Train the pooled effects model; returns (model, screening report)."""
    X, y, feature_names, report = effect_training_data(bundles, cfg)
    train_cfg = cfg.effects_train if seed is None else replace(cfg.effects_train, seed=seed)
    policy_name = bundles[0].covariate_names[bundles[0].policy_index]
    model = train_effect_model(
        X, y, feature_names, train_cfg,
        hidden_width=cfg.effects_width, policy_feature=policy_name,
    )
    return model, report


def pooled_validation_windows(bundles: list[SeriesBundle], cfg: PipelineConfig, horizon: int):
    """Validation-range windows from every bundle, stacked for scoring."""
    W, P, Y = [], [], []
    for bundle in bundles:
        split, stats, nb = prepare_bundle(bundle, cfg)
        for s in make_windows(nb, cfg.tau, horizon):
            if s.origin >= split.validation.start and s.origin + horizon <= split.validation.stop:
                W.append(s.window)
                P.append(s.future_policies)
                Y.append(s.label)
    if not W:
        return None
    return np.stack(W), np.stack(P), np.stack(Y)


@dataclass(frozen=True)
class TrainedPipeline:
    """Everything one training run produces."""

    forecaster: ForecasterModel
    effects: EffectModel
    screening: CorrelationReport | None
    p_used: float


def train_demandnet(bundles: list[SeriesBundle], cfg: PipelineConfig,
                    seed: int = 0, cell: str | None = None,
                    use_policy_skip: bool | None = None) -> TrainedPipeline:
    """Full training sequence: effects model, forecaster, dropout selection."""
    effects, report = train_effects_for(bundles, cfg, seed=seed)
    arch = replace(
        cfg.arch,
        cell=cell if cell is not None else cfg.arch.cell,
        horizon=cfg.model_horizon,
        use_policy_skip=(
            use_policy_skip if use_policy_skip is not None else cfg.arch.use_policy_skip
        ),
    )
    train_cfg = replace(cfg.forecaster_train, seed=seed)
    model = train_forecaster(
        bundles, train_cfg, arch, effects if arch.use_policy_skip else None,
        tau=cfg.tau, fractions=cfg.fractions,
    )
    # keep the effects model reachable for curve artifacts even when the
    # skip connection is ablated
    if model.effect_model is None:
        model.effect_model = effects
    p_used = arch.dropout
    if cfg.optimize_p and cfg.dropout_candidates:
        pooled = pooled_validation_windows(bundles, cfg, arch.horizon)
        if pooled is None:
            log.warning("no validation windows for dropout selection; keeping p=%.3f", p_used)
            model.mc_p = p_used
        else:
            p_used = optimize_dropout(
                model, *pooled, candidates=cfg.dropout_candidates,
                kappa=cfg.kappa, seed=seed,
            )
    else:
        model.mc_p = p_used
    return TrainedPipeline(forecaster=model, effects=effects, screening=report, p_used=p_used)
