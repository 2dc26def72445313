"""Independent reference implementations used as test oracles.

Everything here is written the slow, explicit way on purpose — scalar
loops, ``cmath``, ``math.fsum``, direct probability products — and none
of it imports package internals beyond reading public dataclass fields.
When a test finds the package agreeing with one of these, the agreement
is evidence rather than tautology, because the two sides cannot share a
bug through common helper code.
"""

import cmath
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm

TWO_PI = 2.0 * math.pi


# --- multipath synthesis, one scalar sample at a time ------------------------

def unit_sample(grid, a, s, b, tof, aoa, dfs):
    """Unit-amplitude path value at packet a, subcarrier s, antenna b."""
    phase = TWO_PI * (
        (dfs or 0.0) * a * grid.packet_interval
        - grid.subcarrier_spacing * tof * s
        - grid.carrier_freq * grid.antenna_spacing * aoa * b
    )
    return cmath.exp(1j * phase)


def csi_sample(paths, grid, a, s, b):
    """One CSI sample as an explicit sum over paths."""
    total = 0j
    for p in paths:
        total += p.amplitude * unit_sample(grid, a, s, b, p.tof, p.aoa, p.dfs)
    return total


def csi_tensor(paths, grid):
    """Noise-free CSI tensor built sample-by-sample."""
    out = np.zeros(grid.shape, dtype=complex)
    for a in range(grid.num_packets):
        for s in range(grid.num_subcarriers):
            for b in range(grid.num_antennas):
                out[a, s, b] = csi_sample(paths, grid, a, s, b)
    return out


# --- matched filtering by brute force ----------------------------------------

def correlation(q, grid, tof, aoa, dfs=None):
    """<steering, q> as an explicit loop over every sample."""
    q = np.asarray(q)
    z = 0j
    if q.ndim == 3:
        for a in range(q.shape[0]):
            for s in range(q.shape[1]):
                for b in range(q.shape[2]):
                    u = unit_sample(grid, a, s, b, tof, aoa, dfs)
                    z += q[a, s, b] * u.conjugate()
    elif q.ndim == 2:
        for s in range(q.shape[0]):
            for b in range(q.shape[1]):
                u = unit_sample(grid, 0, s, b, tof, aoa, None)
                z += q[s, b] * u.conjugate()
    else:
        raise ValueError("observation must be 2-D or 3-D")
    return z


def matched_power(q, grid, tof, aoa, dfs=None):
    return abs(correlation(q, grid, tof, aoa, dfs)) ** 2


# --- joint least-squares path fitting ----------------------------------------


def unit_path_array(grid, tof, aoa, dfs=None):
    """Unit-amplitude path tensor, built from raw index arithmetic."""
    a = np.arange(grid.num_packets)[:, None, None]
    s = np.arange(grid.num_subcarriers)[None, :, None]
    b = np.arange(grid.num_antennas)[None, None, :]
    phase = TWO_PI * (
        (dfs or 0.0) * a * grid.packet_interval
        - grid.subcarrier_spacing * tof * s
        - grid.carrier_freq * grid.antenna_spacing * aoa * b
    )
    return np.exp(1j * phase)


def ls_explained_energy(h, grid, param_sets):
    """Energy a joint least-squares fit at fixed parameters explains.

    ``param_sets`` lists (tof, aoa, dfs) triples; amplitudes are the
    exact joint least-squares solution, so the returned value is
    ||h||^2 - min_A ||h - sum_m A_m * path_m||^2.
    """
    hf = np.asarray(h).ravel()
    cols = np.stack(
        [unit_path_array(grid, *p).ravel() for p in param_sets], axis=1
    )
    gram = cols.conj().T @ cols
    rhs = cols.conj().T @ hf
    amps, *_ = np.linalg.lstsq(cols, hf, rcond=None)
    del gram  # kept for clarity of the normal equations; lstsq is safer
    return float(np.real(np.vdot(rhs, amps))), amps


def joint_two_path_search(h, grid, tofs, aoas, dfss):
    """Exhaustive joint search: best 1- or 2-path LS explained energy.

    Scans every candidate pair (and every single candidate) on the
    cartesian grid and returns (best explained energy, best parameter
    list).  Closed-form 2x2 Hermitian solves keep the pair scan
    affordable at coarse grid sizes.
    """
    hf = np.asarray(h).ravel()
    cand = [(t, o, d) for t in tofs for o in aoas for d in dfss]
    cols = np.stack([unit_path_array(grid, *p).ravel() for p in cand], axis=1)
    rhs = cols.conj().T @ hf                     # (P,)
    n = float(hf.size)                           # gram diagonal (unit paths)

    singles = np.abs(rhs) ** 2 / n
    best_idx = int(np.argmax(singles))
    best = (float(singles[best_idx]), [cand[best_idx]])

    ii, jj = np.triu_indices(len(cand), k=1)
    # Pairwise gram entries in manageable blocks.
    block = 200_000
    for lo in range(0, len(ii), block):
        bi, bj = ii[lo : lo + block], jj[lo : lo + block]
        g12 = np.einsum("ij,ij->j", cols[:, bi].conj(), cols[:, bj])
        det = n * n - np.abs(g12) ** 2
        ok = det > 1e-6 * n * n                   # skip near-collinear pairs
        r1, r2 = rhs[bi], rhs[bj]
        num = (
            n * np.abs(r1) ** 2
            + n * np.abs(r2) ** 2
            - 2.0 * np.real(g12 * np.conj(r1) * r2)
        )
        expl = np.where(ok, num / np.where(ok, det, 1.0), -np.inf)
        k = int(np.argmax(expl))
        if expl[k] > best[0]:
            best = (float(expl[k]), [cand[bi[k]], cand[bj[k]]])
    return best


# --- coupled-training arithmetic ---------------------------------------------

def penalty_value(sq_dist, scale):
    return 1.0 - math.exp(-sq_dist / scale)


def coupled_objective(model, params, datasets, lam, scale):
    """Loss sum plus pairwise penalty, accumulated with fsum."""
    losses = [
        model.loss(np.asarray(w, dtype=float), ds.X_train, ds.y_train)
        for w, ds in zip(params, datasets)
    ]
    pairs = []
    for k in range(len(params)):
        for j in range(k + 1, len(params)):
            d = np.asarray(params[k], float) - np.asarray(params[j], float)
            pairs.append(penalty_value(float(d @ d), scale))
    return math.fsum(losses) + lam * math.fsum(pairs)


def coordinator_step(params, effective_rate, lam, scale):
    """Mixing matrix and next iterates from first principles.

    Off-diagonal weight (k, j) is rate*lam*exp(-||wk-wj||^2/scale)/scale;
    the diagonal tops each row up to one; the next iterate is the
    row-weighted model combination, coordinate sums via fsum.
    """
    stacked = [np.asarray(w, dtype=float) for w in params]
    k_count = len(stacked)
    mix = [[0.0] * k_count for _ in range(k_count)]
    for k in range(k_count):
        for j in range(k_count):
            if j == k:
                continue
            d = stacked[k] - stacked[j]
            u = float(d @ d)
            mix[k][j] = effective_rate * lam * math.exp(-u / scale) / scale
    for k in range(k_count):
        mix[k][k] = 1.0 - math.fsum(
            mix[k][j] for j in range(k_count) if j != k
        )
    dim = stacked[0].size
    nxt = []
    for k in range(k_count):
        w = np.array(
            [
                math.fsum(mix[k][j] * stacked[j][c] for j in range(k_count))
                for c in range(dim)
            ]
        )
        nxt.append(w)
    return nxt, np.array(mix)


def coupling_gradient(params, lam, scale, k):
    """d/dw_k of lam * sum_{i<j} penalty(||w_i - w_j||^2)."""
    wk = np.asarray(params[k], dtype=float)
    g = np.zeros_like(wk)
    for j in range(len(params)):
        if j == k:
            continue
        d = wk - np.asarray(params[j], dtype=float)
        u = float(d @ d)
        g += lam * (math.exp(-u / scale) / scale) * 2.0 * d
    return g


def direct_joint_descent(
    model, datasets, lam, scale, step=0.05, iters=20000, tol=1e-10
):
    """Plain joint gradient descent on the stacked coupled objective.

    An optimization route entirely unlike the round-structured trainer:
    one synchronous gradient step on all receivers at once.  Used as the
    long-horizon optimum oracle for the coupled problem.
    """
    params = [np.zeros(model.dim) for _ in datasets]
    for _ in range(iters):
        grads = [
            model.grad(w, ds.X_train, ds.y_train)
            + coupling_gradient(params, lam, scale, k)
            for k, (w, ds) in enumerate(zip(params, datasets))
        ]
        gnorm = math.sqrt(math.fsum(float(g @ g) for g in grads))
        if gnorm < tol:
            break
        params = [w - step * g for w, g in zip(params, grads)]
    return params


# --- exact discrete data law -------------------------------------------------

def exact_cell_distribution(num_classes, class_sep, noise, n_axes, cluster):
    """Cell probabilities of the (label, detected-axis) law, re-derived.

    Axis j of the signature block has mean class_sep when j equals
    label + cluster and zero otherwise; it "fires" when its Gaussian
    value exceeds class_sep / 2.  Cell (y, j) is the probability that
    exactly axis j fired under label y; the trailing cell per label
    collects everything else.  Labels are uniform.
    """
    thr = 0.5 * class_sep
    probs = []
    for y in range(num_classes):
        fire = [
            1.0
            - norm.cdf(thr, loc=(class_sep if j == y + cluster else 0.0),
                       scale=noise)
            for j in range(n_axes)
        ]
        row = []
        for j in range(n_axes):
            terms = [
                fire[k] if k == j else (1.0 - fire[k]) for k in range(n_axes)
            ]
            row.append(math.prod(terms))
        row.append(1.0 - math.fsum(row))
        probs.extend(v / num_classes for v in row)
    return np.array(probs)


def tv_sup(p, q):
    """Largest per-cell probability gap, by plain loop."""
    return max(abs(float(a) - float(b)) for a, b in zip(p, q))


# --- closed-form bound arithmetic --------------------------------------------

def rate_constant(smoothness, strong_convexity, penalty_curv, lam):
    L, mu, k = smoothness, strong_convexity, penalty_curv
    return 1.0 / (
        12.0 * (L + lam * k)
        + 128.0 * lam * k * L * L / (mu * mu)
        + 96.0 * L * L / mu
    )


def training_bound(
    init_sq, rate, mu, rounds, local_steps, k_count, dispersion, noise, batch
):
    decay = init_sq * math.exp(-rate * mu * rounds / 4.0)
    noise_term = 0.0 if batch is None else noise / batch
    floor = (
        (1.0 + mu * rounds)
        * (local_steps * dispersion + noise_term)
        / (mu**3 * rounds**2 * local_steps * k_count)
    )
    return decay + floor


def transfer_bound(
    gap, lam, level_gap, k_count, ceiling, weights, target_probs, source_probs
):
    mismatch = math.fsum(
        max(
            abs(float(wk) * float(pt) - float(ps) / k_count)
            for pt, ps in zip(target_probs, probs)
        )
        for wk, probs in zip(weights, source_probs)
    )
    return (gap + (lam + level_gap) * k_count) / k_count + ceiling * mismatch


# --- generic checking helpers ------------------------------------------------

def fd_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def match_paths(estimated, truth, scales=(1.0, 1e-8, 0.5, 50.0)):
    """Optimal assignment of estimated paths to ground-truth paths.

    Both lists hold objects with amplitude/tof/aoa/dfs fields; the cost
    is the euclidean distance of the scale-normalized parameter vectors.
    Returns the matched (estimated, truth) pairs.
    """
    def vec(p):
        return np.array(
            [
                p.amplitude / scales[0],
                p.tof / scales[1],
                p.aoa / scales[2],
                (p.dfs or 0.0) / scales[3],
            ]
        )

    cost = np.array(
        [[np.linalg.norm(vec(e) - vec(t)) for t in truth] for e in estimated]
    )
    rows, cols = linear_sum_assignment(cost)
    return [(estimated[r], truth[c]) for r, c in zip(rows, cols)]
