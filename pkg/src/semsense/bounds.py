"""Constants and closed forms for the training/transfer guarantees.

Everything here is pure arithmetic on quantities the rest of the package
produces: gradient magnitudes at converged models, smoothness and strong
convexity of the plug-in model, the curvature of the attention penalty,
and exact discrete data distributions.  The two headline quantities are
``training_error_bound`` (how far the joint objective can still be from
its optimum after T rounds) and ``transfer_error_bound`` (how far a
similarity-aggregated model can be from the local optimum of an
unlabeled receiver).  Both carry an unknown numerical prefactor, so the
tests assert the inequality with a fixed generous constant and report
the smallest constant that would have sufficed.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ShapeError

#: generous hidden prefactor used when asserting bound validity
DEFAULT_BOUND_CONSTANT = 10.0


def penalty_curvature_bound(penalty_scale: float) -> float:
    """Smoothness constant of w -> 1 - exp(-||w - w'||^2 / penalty_scale).

    Writing f(u) = 1 - e^{-u/s} with u the squared distance, the Hessian
    in w is 2f'(u) I + 4u f''(u) along the difference direction; its
    largest absolute eigenvalue over all u is attained at u = 0 and
    equals 2 / s.
    """
    if not penalty_scale > 0.0:
        raise ShapeError("penalty_scale must be positive")
    return 2.0 / penalty_scale


def stable_rate_bound(smoothness, lam, penalty_curv, strong_convexity):
    """Largest aggregate learning rate the convergence analysis allows.

    1 / (12(L + lam*k) + 128*lam*k*L^2/mu^2 + 96*L^2/mu) with L the
    loss smoothness, mu its strong convexity and k the penalty
    curvature bound.  Decreasing in each of L, lam, k.
    """
    L, mu, k = float(smoothness), float(strong_convexity), float(penalty_curv)
    if min(L, mu, k) <= 0.0 or lam < 0.0:
        raise ShapeError("constants must be positive (lam non-negative)")
    denom = 12.0 * (L + lam * k) + 128.0 * lam * k * L**2 / mu**2 \
        + 96.0 * L**2 / mu
    return 1.0 / denom


def gradient_dispersion(model, params_list, datasets) -> float:
    """Sum of squared per-receiver full-gradient norms at the given models.

    Zero exactly when every receiver's model is stationary for its own
    data; near zero on iid scenarios evaluated at their local optima.
    """
    if len(params_list) != len(datasets):
        raise ShapeError("one parameter vector per dataset required")
    total = 0.0
    for w, ds in zip(params_list, datasets):
        g = model.grad(np.asarray(w, dtype=float), ds.X_train, ds.y_train)
        total += float(g @ g)
    return total


def objective_level_gap(model, source_pairs, target_params,
                        target_dataset) -> float:
    """Mean optimal source loss minus the target's optimal loss.

    ``source_pairs`` is a list of (params, dataset).  Positive when the
    target's problem is easier than the sources' on average; genuinely
    signed, never clamped.
    """
    if not source_pairs:
        raise ShapeError("need at least one source")
    src = [
        model.loss(np.asarray(w, dtype=float), ds.X_train, ds.y_train)
        for w, ds in source_pairs
    ]
    tgt = model.loss(
        np.asarray(target_params, dtype=float),
        target_dataset.X_train,
        target_dataset.y_train,
    )
    return float(np.mean(src) - tgt)


def gradient_noise_estimate(
    model, params_list, datasets, batch_size, seed=0, draws=32
) -> float:
    """Monte-Carlo estimate of E||minibatch grad - full grad||^2.

    Averaged over receivers and ``draws`` random batches each, at the
    supplied (usually final) models.  Full-batch training has zero
    gradient noise by construction; pass batch_size=None to short-cut.
    """
    if batch_size is None:
        return 0.0
    rng = np.random.default_rng(seed)
    acc = []
    for w, ds in zip(params_list, datasets):
        w = np.asarray(w, dtype=float)
        full = model.grad(w, ds.X_train, ds.y_train)
        n = len(ds.X_train)
        b = min(batch_size, n)
        for _ in range(draws):
            idx = rng.choice(n, size=b, replace=False)
            g = model.grad(w, ds.X_train[idx], ds.y_train[idx])
            d = g - full
            acc.append(float(d @ d))
    return float(np.mean(acc))


def training_error_bound(
    init_dist_sq,
    rate_bound,
    strong_convexity,
    rounds,
    local_steps,
    num_receivers,
    dispersion,
    grad_noise,
    batch_size,
) -> float:
    """Closed-form ceiling on the joint-objective gap after ``rounds``.

    init_dist_sq * exp(-rate*mu*T/4)
      + (1 + mu*T) * (E*dispersion + noise/B) / (mu^3 T^2 E K)
    with unit prefactor.  ``batch_size=None`` means full batch (the
    noise term vanishes).
    """
    mu = float(strong_convexity)
    T = int(rounds)
    E = int(local_steps)
    K = int(num_receivers)
    if min(mu, rate_bound) <= 0.0 or min(T, E, K) < 1:
        raise ShapeError("constants must be positive")
    noise_term = 0.0 if batch_size is None else grad_noise / float(batch_size)
    decay = float(init_dist_sq) * math.exp(-rate_bound * mu * T / 4.0)
    floor = (1.0 + mu * T) * (E * float(dispersion) + noise_term) \
        / (mu**3 * T**2 * E * K)
    return decay + floor


def _as_prob_vector(p, name):
    arr = np.asarray(getattr(p, "probs", p), dtype=np.float64).ravel()
    if arr.size == 0:
        raise ShapeError(f"{name}: empty distribution")
    if not np.all(np.isfinite(arr)) or np.any(arr < -1e-12):
        raise ShapeError(f"{name}: entries must be finite and non-negative")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ShapeError(f"{name}: probabilities sum to {arr.sum()!r}, not 1")
    return np.clip(arr, 0.0, None)


def tv_distance(p, q) -> float:
    """Largest single-cell probability gap between two distributions.

    Accepts plain arrays or objects exposing ``.probs`` on a shared
    support enumeration.  This is the supremum form: symmetric, zero
    exactly on equal vectors, at most 1, and a metric on the simplex.
    """
    pa = _as_prob_vector(p, "p")
    qa = _as_prob_vector(q, "q")
    if pa.shape != qa.shape:
        raise ShapeError("distributions live on different supports")
    return float(np.max(np.abs(pa - qa)))


def transfer_error_bound(
    training_gap,
    lam,
    level_gap,
    num_sources,
    loss_ceiling,
    weights,
    target_dist,
    source_dists,
) -> float:
    """Ceiling on (transferred loss - locally optimal loss) for a target.

    (gap + (lam + level_gap) K) / K
      + ceiling * sum_k sup|w_k * P_target - P_k / K|
    where the sup runs over the shared discrete support.  The mismatch
    term compares each source's scaled distribution against the
    target's, so it vanishes when every source matches the target and
    the weights are uniform.
    """
    K = int(num_sources)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if K < 1 or w.shape != (K,) or len(source_dists) != K:
        raise ShapeError("need one weight and one distribution per source")
    pt = _as_prob_vector(target_dist, "target")
    mismatch = 0.0
    for wk, dist in zip(w, source_dists):
        pk = _as_prob_vector(dist, "source")
        if pk.shape != pt.shape:
            raise ShapeError("distributions live on different supports")
        mismatch += float(np.max(np.abs(wk * pt - pk / K)))
    return (float(training_gap) + (float(lam) + float(level_gap)) * K) / K \
        + float(loss_ceiling) * mismatch


def tightest_prefactor(empirical, bounds) -> float:
    """Smallest C with empirical_i <= C * bound_i everywhere.

    Infinite if some bound is zero while the matching empirical value is
    positive; zero when every empirical value is non-positive.
    """
    emp = np.asarray(empirical, dtype=float).ravel()
    bnd = np.asarray(bounds, dtype=float).ravel()
    if emp.shape != bnd.shape or emp.size == 0:
        raise ShapeError("empirical and bound lists must align")
    if np.any(bnd < 0.0):
        raise ShapeError("bounds must be non-negative")
    worst = 0.0
    for e, b in zip(emp, bnd):
        if e <= 0.0:
            continue
        worst = max(worst, math.inf if b == 0.0 else e / b)
    return worst


@dataclass
class BoundReport:
    """Everything needed to audit one bound comparison after the fact.

    ``constants`` maps each constant's name to {"value", "provenance"}
    where provenance says whether it was derived analytically or
    estimated from data.
    """

    dispersion: float = 0.0
    level_gap: float = 0.0
    rate_bound: float = 0.0
    training_bound: float = None
    transfer_bound: float = None
    empirical: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def record_constant(self, name, value, provenance):
        self.constants[name] = {
            "value": float(value),
            "provenance": str(provenance),
        }

    def as_dict(self):
        return {
            "dispersion": self.dispersion,
            "level_gap": self.level_gap,
            "rate_bound": self.rate_bound,
            "training_bound": self.training_bound,
            "transfer_bound": self.transfer_bound,
            "empirical": dict(self.empirical),
            "constants": {k: dict(v) for k, v in self.constants.items()},
        }
