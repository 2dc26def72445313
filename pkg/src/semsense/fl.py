"""Personalized federated training with attention-style model coupling.

Each labeled receiver runs a few local SGD steps per round, then a
coordinator nudges every model toward the others with strength set by a
negative-exponential penalty on pairwise squared model distance,
1 - exp(-d / scale).  The coordinator step has two equivalent
forms — an explicit penalty-gradient step and a row-stochastic linear
combination of the uploaded models — and this module computes both every
round and checks that they agree to 1e-12, because that identity is what
the aggregation-weight matrix analysis rests on.

A plain federated-averaging baseline is included for comparisons.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from .errors import (
    DivergenceError,
    LearningRateTooLarge,
    NoData,
    ShapeError,
)
from .models import ModelParams
from .seeding import substream

_FORM_AGREEMENT_TOL = 1e-12


def attention_penalty(sq_dist, penalty_scale):
    """1 - exp(-d/scale) evaluated at a squared distance d."""
    return 1.0 - math.exp(-sq_dist / penalty_scale)


def attention_penalty_deriv(sq_dist, penalty_scale):
    """Penalty derivative exp(-d/scale)/scale; bounded by 1/scale."""
    return math.exp(-sq_dist / penalty_scale) / penalty_scale


@dataclass
class TrainConfig:
    """Knobs for one federated training run."""

    lam: float = 0.3          # coupling strength; 0 decouples receivers, large
                              # values herd every model toward one consensus
                              # before the attention term can tell clusters apart
    penalty_scale: float = 1.0      # penalty length scale
    eta: float = 0.025        # local learning rate
    local_steps: int = 5      # SGD steps per receiver per round
    batch_size: int = None    # None = full batch
    rounds: int = 60
    objective_target: float = None       # optional early-stop target on the objective
    allow_large_rate: bool = False
    divergence_factor: float = 10.0

    @property
    def effective_rate(self):
        return self.eta * self.local_steps


@dataclass
class ConvergenceTrace:
    rounds: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    per_receiver_loss: list = field(default_factory=list)
    mixing_matrices: list = field(default_factory=list)
    mixing_offdiag_min: list = field(default_factory=list)
    mixing_offdiag_max: list = field(default_factory=list)
    wall_clock: list = field(default_factory=list)  # not persisted
    stop_reason: str = ""


def coupled_objective(model, params_list, datasets, lam, penalty_scale):
    """Sum of per-receiver full losses plus the pairwise coupling penalty.

    The penalty sums R(||w_k - w_j||^2) over unordered pairs k < j,
    scaled by lam; identical models contribute nothing (R(0) = 0) and
    lam = 0 reduces the objective to the plain loss sum.
    """
    if len(params_list) != len(datasets):
        raise ShapeError(
            f"{len(params_list)} models vs {len(datasets)} datasets"
        )
    losses = [
        model.loss(w, ds.X_train, ds.y_train)
        for w, ds in zip(params_list, datasets)
    ]
    total = math.fsum(losses)
    if lam > 0.0:
        pair_terms = []
        for k in range(len(params_list)):
            for j in range(k + 1, len(params_list)):
                d = params_list[k] - params_list[j]
                pair_terms.append(attention_penalty(float(d @ d), penalty_scale))
        total += lam * math.fsum(pair_terms)
    return total


def local_sgd_round(model, w, dataset, eta, num_steps, batch_size, rng):
    """Run ``num_steps`` mini-batch SGD steps on one receiver's data.

    Mini-batches are drawn without replacement from a shuffled epoch
    pool, reshuffled on exhaustion.  ``batch_size=None`` uses the full
    dataset every step (no randomness consumed).  ``rng`` is an integer
    seed or a numpy Generator.
    """
    n = len(dataset.X_train)
    if n == 0:
        raise NoData("local update on an empty dataset")
    if batch_size is not None and batch_size > n:
        raise ShapeError(f"batch size {batch_size} exceeds dataset size {n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    w = np.array(w, dtype=np.float64, copy=True)
    if batch_size is None:
        for _ in range(num_steps):
            w -= eta * model.grad(w, dataset.X_train, dataset.y_train)
        return w
    pool = rng.permutation(n)
    pos = 0
    for _ in range(num_steps):
        if pos + batch_size > n:
            pool = rng.permutation(n)
            pos = 0
        idx = pool[pos : pos + batch_size]
        pos += batch_size
        w -= eta * model.grad(w, dataset.X_train[idx], dataset.y_train[idx])
    return w


def coordinator_update(params_list, effective_rate, lam, penalty_scale, override=False):
    """One coupling step over the uploaded models.

    Returns (next_params_list, mixing) where mixing is the row-stochastic
    aggregation-weight matrix: off-diagonal (k, j) entries are
    effective_rate*lam*attention_penalty_deriv(||w_k - w_j||^2) and each
    diagonal entry tops the row up to exactly 1.  The same step is also
    evaluated as an explicit gradient move on the summed pairwise penalty,
    and the two forms are required to agree to 1e-12; a discrepancy raises
    FloatingPointError.

    The rate bound eta <= 1/(lam*E*(K-1)) — i.e. effective_rate*lam*(K-1) <= 1
    — keeps every weight in [0, 1] whenever penalty_scale >= 1; violating it
    without ``override`` raises LearningRateTooLarge.
    """
    k_count = len(params_list)
    if k_count == 0:
        raise ShapeError("coordinator needs at least one model")
    stacked = np.stack([np.asarray(w, dtype=np.float64) for w in params_list])
    if k_count == 1 or lam == 0.0:
        return [row.copy() for row in stacked], np.eye(k_count)

    limit = 1.0 / (lam * (k_count - 1))
    if effective_rate > limit * (1.0 + 1e-12) and not override:
        raise LearningRateTooLarge(
            f"effective_rate={effective_rate:g} exceeds 1/(lam*(K-1))={limit:g}; "
            f"lower the local rate or pass override"
        )

    deriv = np.zeros((k_count, k_count))
    for k in range(k_count):
        for j in range(k + 1, k_count):
            d = stacked[k] - stacked[j]
            deriv[k, j] = deriv[j, k] = attention_penalty_deriv(
                float(d @ d), penalty_scale
            )

    mixing = effective_rate * lam * deriv
    for k in range(k_count):
        off_row = [mixing[k, j] for j in range(k_count) if j != k]
        mixing[k, k] = 1.0 - math.fsum(off_row)

    combined = mixing @ stacked

    # The explicit penalty-gradient form of the same step.
    direct = stacked.copy()
    for k in range(k_count):
        pull = np.zeros_like(stacked[k])
        for j in range(k_count):
            if j != k:
                pull += deriv[k, j] * (stacked[k] - stacked[j])
        direct[k] = stacked[k] - effective_rate * lam * pull

    scale = max(1.0, float(np.max(np.abs(stacked))))
    disagreement = float(np.max(np.abs(combined - direct))) / scale
    if disagreement > _FORM_AGREEMENT_TOL:
        raise FloatingPointError(
            f"coordinator forms disagree by {disagreement:.3e}"
        )
    return [row.copy() for row in combined], mixing


def _labeled_problems(scenario):
    labeled = [r for r in scenario.receivers if r.labeled]
    if not labeled:
        raise NoData("scenario has no labeled receivers")
    for r in labeled:
        if r.dataset is None or len(r.dataset.X_train) == 0:
            raise NoData(f"labeled receiver {r.id} has no training data")
    return labeled


def train_personalized(
    scenario, model_factory, cfg: TrainConfig, seed=None, round_callback=None
):
    """Full training loop; returns (per-receiver ModelParams, trace).

    ``round_callback(t, params_list)``, when given, runs after every
    coordinator step — handy for per-round accuracy curves without
    re-training.
    """
    labeled = _labeled_problems(scenario)
    datasets = [r.dataset for r in labeled]
    model = model_factory()
    root = scenario.seed if seed is None else seed
    params = [model.init_params() for _ in labeled]

    trace = ConvergenceTrace()
    j0 = coupled_objective(model, params, datasets, cfg.lam, cfg.penalty_scale)
    divergence_bar = cfg.divergence_factor * max(abs(j0), 1.0)

    for t in range(1, cfg.rounds + 1):
        tic = time.monotonic()
        params = [
            local_sgd_round(
                model,
                w,
                ds,
                cfg.eta,
                cfg.local_steps,
                cfg.batch_size,
                substream(root, "training", t, r.id),
            )
            for w, ds, r in zip(params, datasets, labeled)
        ]
        params, mixing = coordinator_update(
            params,
            cfg.effective_rate,
            cfg.lam,
            cfg.penalty_scale,
            override=cfg.allow_large_rate,
        )
        j_now = coupled_objective(model, params, datasets, cfg.lam, cfg.penalty_scale)
        losses = [
            model.loss(w, ds.X_train, ds.y_train)
            for w, ds in zip(params, datasets)
        ]
        off = mixing[~np.eye(len(params), dtype=bool)]
        trace.rounds.append(t)
        trace.objective.append(j_now)
        trace.per_receiver_loss.append(losses)
        trace.mixing_matrices.append(mixing.copy())
        trace.mixing_offdiag_min.append(float(off.min()) if off.size else 0.0)
        trace.mixing_offdiag_max.append(float(off.max()) if off.size else 0.0)
        trace.wall_clock.append(time.monotonic() - tic)
        if round_callback is not None:
            round_callback(t, params)
        if j_now > divergence_bar:
            trace.stop_reason = "diverged"
            raise DivergenceError(
                f"objective {j_now:.3g} blew past {divergence_bar:.3g}",
                trace=trace,
            )
        if cfg.objective_target is not None and j_now <= cfg.objective_target:
            trace.stop_reason = "target"
            break
    else:
        trace.stop_reason = "rounds"

    result = [ModelParams(w, model.arch) for w in params]
    return result, trace


def train_fedavg_baseline(scenario, model_factory, cfg: TrainConfig, seed=None):
    """Single-global-model baseline: local SGD then uniform averaging."""
    labeled = _labeled_problems(scenario)
    datasets = [r.dataset for r in labeled]
    model = model_factory()
    root = scenario.seed if seed is None else seed
    w_global = model.init_params()
    sizes = np.array([len(ds.X_train) for ds in datasets], dtype=float)
    weights = sizes / sizes.sum()

    trace = ConvergenceTrace()
    for t in range(1, cfg.rounds + 1):
        tic = time.monotonic()
        locals_ = [
            local_sgd_round(
                model,
                w_global,
                ds,
                cfg.eta,
                cfg.local_steps,
                cfg.batch_size,
                substream(root, "training", t, r.id),
            )
            for ds, r in zip(datasets, labeled)
        ]
        w_global = np.einsum("k,kd->d", weights, np.stack(locals_))
        losses = [
            model.loss(w_global, ds.X_train, ds.y_train) for ds in datasets
        ]
        trace.rounds.append(t)
        trace.objective.append(math.fsum(losses))
        trace.per_receiver_loss.append(losses)
        trace.mixing_offdiag_min.append(float(weights.min()))
        trace.mixing_offdiag_max.append(float(weights.max()))
        trace.wall_clock.append(time.monotonic() - tic)
    trace.stop_reason = "rounds"
    return ModelParams(w_global, model.arch), trace


def train_to_fixed_point(
    scenario,
    model_factory,
    cfg: TrainConfig,
    tol=1e-9,
    max_rounds=20000,
    seed=None,
):
    """Iterate the full-batch training map until it stops moving.

    Returns (params_list, rounds_used, final_move).  Requires a
    full-batch config (batch_size None); the fixed point it finds is the
    long-horizon limit the finite-round runs are compared against.
    """
    if cfg.batch_size is not None:
        raise ShapeError("fixed-point iteration requires full-batch config")
    labeled = _labeled_problems(scenario)
    datasets = [r.dataset for r in labeled]
    model = model_factory()
    params = [model.init_params() for _ in labeled]
    move = np.inf
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        prev = [w.copy() for w in params]
        params = [
            local_sgd_round(model, w, ds, cfg.eta, cfg.local_steps, None, 0)
            for w, ds in zip(params, datasets)
        ]
        params, _ = coordinator_update(
            params,
            cfg.effective_rate,
            cfg.lam,
            cfg.penalty_scale,
            override=cfg.allow_large_rate,
        )
        move = max(
            float(np.max(np.abs(w - p))) for w, p in zip(params, prev)
        )
        if move < tol:
            break
    return [ModelParams(w, model.arch) for w in params], rounds, move


def rounds_to_objective(trace: ConvergenceTrace, target: float):
    """First recorded round whose objective is <= target, or None."""
    for t, j in zip(trace.rounds, trace.objective):
        if j <= target:
            return t
    return None
