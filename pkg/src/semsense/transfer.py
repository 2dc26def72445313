"""Zero-shot model construction for receivers that never saw a label.

The transferred model is a convex combination of labeled receivers'
trained models, weighted by how similar the target's channel semantics
are to each source's.  Similarity runs through the learned embedding
when a fitted mapper is supplied, and falls back to raw featurized
semantics otherwise (the single-source case, where no mapper can be
fit, always yields weight [1]).  Evaluation compares the transferred
model against a supervised oracle trained on the hidden evaluation
dataset the simulation grants every unlabeled receiver.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .bounds import (
    BoundReport,
    gradient_noise_estimate,
    objective_level_gap,
    penalty_curvature_bound,
    stable_rate_bound,
    training_error_bound,
    gradient_dispersion,
    transfer_error_bound,
    tv_distance,
)
from .channel import PhysicalSemantics
from .errors import (
    ArchMismatch,
    InsufficientPairs,
    InvalidScenario,
    ShapeError,
)
from .fl import TrainConfig, coupled_objective, train_personalized, train_to_fixed_point
from .mapper import embed, featurize_semantics, fit_mapping
from .models import LogisticRegression, ModelParams, check_same_arch, evaluate
from .scenario import Scenario, generate_datasets, make_scenario
from .seeding import substream


def _as_features(obj):
    if isinstance(obj, PhysicalSemantics):
        return featurize_semantics(obj)
    arr = np.asarray(obj, dtype=np.float64).ravel()
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ShapeError("features must be a non-empty finite vector")
    return arr


def normalize_weights(raw) -> np.ndarray:
    """Scale non-negative similarities onto the probability simplex."""
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.size == 0:
        raise ShapeError("no similarities to normalize")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0.0):
        raise ShapeError("similarities must be finite and non-negative")
    total = raw.sum()
    if total <= 0.0:
        return np.full(raw.size, 1.0 / raw.size)
    return raw / total


def aggregation_coefficients(target, sources, mapper=None) -> np.ndarray:
    """Simplex weights over sources from semantic similarity.

    ``target`` and each source may be semantics objects or already
    featurized vectors.  With a mapper the distance is taken between
    embeddings; without one, between raw feature vectors.  Any source at
    distance exactly zero is an exact semantic match: all mass is then
    split uniformly over the exact matches, so a twin receiver inherits
    its twin's model outright instead of a smeared average.
    """
    if len(sources) == 0:
        raise ShapeError("need at least one source")
    tf = _as_features(target)
    sf = [_as_features(s) for s in sources]
    for f in sf:
        if f.shape != tf.shape:
            raise ShapeError("feature lengths differ between target/sources")
    if mapper is not None:
        tf = embed(tf, mapper)
        sf = [embed(f, mapper) for f in sf]
    d_sq = np.array([float((tf - f) @ (tf - f)) for f in sf])
    exact = d_sq == 0.0
    if exact.any():
        return exact.astype(np.float64) / exact.sum()
    return normalize_weights(np.exp(-d_sq))


def transfer_model(target, sources, mapper=None) -> ModelParams:
    """Aggregate source models into one for the unlabeled target.

    ``sources`` is a list of (semantics_or_features, ModelParams); all
    models must share one architecture.  The output is exactly the
    convex combination with ``aggregation_coefficients`` weights.
    """
    if len(sources) == 0:
        raise ShapeError("need at least one source")
    models = [m for _, m in sources]
    check_same_arch(models)
    weights = aggregation_coefficients(target, [s for s, _ in sources], mapper)
    stacked = np.stack([m.values for m in models])
    combined = np.einsum("k,kd->d", weights, stacked)
    return ModelParams(combined, dict(models[0].arch))


def train_local_oracle(model, dataset, tol=1e-6, max_iters=200000, seed=None):
    """Supervised reference: minimize the local objective outright.

    Plain full-batch gradient descent at step 1/L until the gradient
    norm drops below ``tol``; for the strongly convex plug-ins this
    pins the unique local optimum to ~tol/mu regardless of the random
    start (``seed=None`` starts from the model's default init).
    """
    w = np.asarray(model.init_params(), dtype=np.float64)
    if seed is not None:
        rng = substream(seed, "oracle-init")
        w = w + 0.1 * rng.standard_normal(w.size)
    X, y = dataset.X_train, dataset.y_train
    step = 1.0 / model.smoothness(X) if hasattr(model, "smoothness") else 0.1
    for _ in range(max_iters):
        g = model.grad(w, X, y)
        if float(np.linalg.norm(g)) < tol:
            break
        w = w - step * g
    return ModelParams(w, model.arch)


def default_model_factory(scenario: Scenario):
    """Logistic-regression factory sized to the scenario's datasets."""
    for r in scenario.receivers:
        ds = r.dataset or r.oracle_dataset
        if ds is not None:
            d = ds.X_train.shape[1]
            c = ds.num_classes
            return lambda: LogisticRegression(d, c)
    raise InvalidScenario("no datasets attached; generate them first")


@dataclass
class TransferOutcome:
    """Everything recorded for one unlabeled receiver."""

    target_id: str
    source_ids: list
    weights: np.ndarray
    transferred: ModelParams
    oracle: ModelParams
    transferred_loss: float
    oracle_loss: float
    transfer_error: float
    transferred_accuracy: float
    oracle_accuracy: float
    accuracy_gap: float
    bound_value: float
    bound_report: BoundReport
    tv_to_sources: list


@dataclass
class TransferReport:
    outcomes: list
    source_ids: list
    mean_transferred_accuracy: float
    mean_oracle_accuracy: float
    training_gap: float
    mapper_trace: list = field(default_factory=list)
    training_trace: object = None
    mapper: object = None
    source_params: list = field(default_factory=list)

    def outcome_for(self, target_id):
        for o in self.outcomes:
            if o.target_id == target_id:
                return o
        raise InvalidScenario(f"no outcome for {target_id!r}")


def run_transfer_experiment(
    scenario: Scenario,
    model_factory=None,
    train_cfg: TrainConfig = None,
    mapper_epochs: int = 300,
    mapper_lr: float = 0.05,
    oracle_tol: float = 1e-6,
) -> TransferReport:
    """Full pipeline: train sources, fit the mapper, transfer, audit.

    For every unlabeled receiver this records the transferred model, the
    supervised oracle trained on its hidden dataset, the loss gap
    between them (the transfer error), accuracies, and the closed-form
    ceiling on that gap with all constants' provenance.
    """
    labeled = scenario.labeled_receivers()
    targets = scenario.unlabeled_receivers()
    if not targets:
        raise InvalidScenario("scenario has no unlabeled receivers")
    for r in targets:
        if r.oracle_dataset is None:
            raise InvalidScenario(
                f"unlabeled receiver {r.id} lacks its hidden dataset"
            )
    if model_factory is None:
        model_factory = default_model_factory(scenario)
    cfg = train_cfg or TrainConfig(rounds=120, batch_size=None)
    model = model_factory()

    params_list, trace = train_personalized(scenario, model_factory, cfg)

    mapper = None
    mapper_trace = []
    if len(labeled) >= 2:
        pairs = [
            (featurize_semantics(r.semantics), p.values)
            for r, p in zip(labeled, params_list)
        ]
        mapper, mapper_trace = fit_mapping(
            pairs, epochs=mapper_epochs, lr=mapper_lr, seed=scenario.seed
        )

    # Training-gap budget for the transfer ceiling: distance of the
    # finite run from the long-horizon limit of the same full-batch map.
    fb_cfg = cfg if cfg.batch_size is None else replace(cfg, batch_size=None)
    star_params, _, _ = train_to_fixed_point(scenario, model_factory, fb_cfg)
    datasets = [r.dataset for r in labeled]
    j_star = coupled_objective(
        model, [p.values for p in star_params], datasets, cfg.lam, cfg.penalty_scale
    )
    j_final = coupled_objective(
        model, [p.values for p in params_list], datasets, cfg.lam, cfg.penalty_scale
    )
    training_gap = max(j_final - j_star, 0.0)

    source_losses = [
        model.loss(p.values, ds.X_train, ds.y_train)
        for p, ds in zip(params_list, datasets)
    ]
    sources = [(r.semantics, p) for r, p in zip(labeled, params_list)]
    k_l = len(labeled)

    outcomes = []
    for tgt in targets:
        weights = aggregation_coefficients(
            tgt.semantics, [s for s, _ in sources], mapper
        )
        transferred = transfer_model(tgt.semantics, sources, mapper)
        oracle = train_local_oracle(
            model, tgt.oracle_dataset, tol=oracle_tol
        )
        ods = tgt.oracle_dataset
        t_loss = model.loss(transferred.values, ods.X_train, ods.y_train)
        o_loss = model.loss(oracle.values, ods.X_train, ods.y_train)
        t_eval = evaluate(model, transferred.values, ods.X_test, ods.y_test)
        o_eval = evaluate(model, oracle.values, ods.X_test, ods.y_test)

        level_gap = objective_level_gap(
            model,
            list(zip((p.values for p in params_list), datasets)),
            oracle.values,
            ods,
        )
        loss_ceiling = max(source_losses + [t_loss, o_loss])
        tvs = []
        bound_value = None
        report = BoundReport(level_gap=level_gap)
        report.record_constant("loss_ceiling", loss_ceiling,
                              "max loss observed in this experiment")
        report.record_constant("training_gap", training_gap,
                              "final objective minus fixed-point objective")
        if tgt.distribution is not None and all(
            r.distribution is not None for r in labeled
        ):
            tvs = [
                tv_distance(tgt.distribution, r.distribution) for r in labeled
            ]
            bound_value = transfer_error_bound(
                training_gap,
                cfg.lam,
                level_gap,
                k_l,
                loss_ceiling,
                weights,
                tgt.distribution,
                [r.distribution for r in labeled],
            )
            report.transfer_bound = bound_value
        report.empirical["transfer_error"] = t_loss - o_loss
        outcomes.append(
            TransferOutcome(
                target_id=tgt.id,
                source_ids=[r.id for r in labeled],
                weights=weights,
                transferred=transferred,
                oracle=oracle,
                transferred_loss=t_loss,
                oracle_loss=o_loss,
                transfer_error=t_loss - o_loss,
                transferred_accuracy=t_eval["accuracy"],
                oracle_accuracy=o_eval["accuracy"],
                accuracy_gap=o_eval["accuracy"] - t_eval["accuracy"],
                bound_value=bound_value,
                bound_report=report,
                tv_to_sources=tvs,
            )
        )

    return TransferReport(
        outcomes=outcomes,
        source_ids=[r.id for r in labeled],
        mean_transferred_accuracy=float(
            np.mean([o.transferred_accuracy for o in outcomes])
        ),
        mean_oracle_accuracy=float(
            np.mean([o.oracle_accuracy for o in outcomes])
        ),
        training_gap=training_gap,
        mapper_trace=mapper_trace,
        training_trace=trace,
        mapper=mapper,
        source_params=params_list,
    )


def cross_environment_scenario(cfg, target_env: int = 1) -> Scenario:
    """Sources from the base rooms, targets from a rearranged room.

    The target environment re-draws the static (environment) path
    templates while the dynamic (gesture) templates stay shared, so the
    targets' data distributions shift relative to every source's.
    Target receivers are re-labeled so ids stay unique after splicing.
    """
    if target_env == cfg.environment_id:
        raise InvalidScenario("target environment equals the source one")
    source = make_scenario(cfg)
    shifted = make_scenario(replace(cfg, environment_id=target_env))
    spliced = source.labeled_receivers() + [
        replace(r, id=f"{r.id}-e{target_env}")
        for r in shifted.unlabeled_receivers()
    ]
    return Scenario(
        receivers=spliced,
        seed=cfg.seed,
        noise_std=cfg.noise_std,
        phase_error_model=cfg.phase_error_model,
        grid=source.grid,
        cluster_centers=source.cluster_centers,
        config=cfg,
    )


def run_kl_sweep(
    scenario_cfg,
    kl_values,
    seeds,
    dataset_cfg=None,
    train_cfg: TrainConfig = None,
):
    """Mean transferred accuracy per labeled-set size.

    For each (K^L, seed): rebuild the scenario with that many labeled
    receivers plus two unlabeled targets (one per cluster), run the full
    transfer pipeline, and record the mean transferred accuracy over
    targets.  Returns {K^L: [per-seed mean accuracy]}.
    """
    results = {}
    for kl in kl_values:
        if kl < 1:
            raise InvalidScenario("labeled-set size must be >= 1")
        per_seed = []
        for seed in seeds:
            cfg = replace(
                scenario_cfg,
                num_labeled=int(kl),
                num_receivers=int(kl) + 2,
                seed=int(seed),
            )
            scen = generate_datasets(make_scenario(cfg), dataset_cfg=dataset_cfg)
            report = run_transfer_experiment(scen, train_cfg=train_cfg)
            per_seed.append(report.mean_transferred_accuracy)
        results[int(kl)] = per_seed
    return results
