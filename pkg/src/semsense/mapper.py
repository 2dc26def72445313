"""Semantic embedding and the similarity-to-model-correlation mapping.

``featurize_semantics`` flattens a receiver's variable-length path lists
into a fixed vector; ``embed`` projects that vector to a low-dimensional
space with a small two-layer network; similarity between receivers is
exp(-squared embedding distance), which is 1 exactly for identical
embeddings.  A second small network scores correlation between two
trained model vectors from order-invariant summaries of their absolute
difference.  ``fit_mapping`` trains both networks jointly so that the
similarity of two receivers' embedded semantics matches the scored
correlation of their trained models; gradients are hand-derived and
checked against finite differences in the tests.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .channel import PhysicalSemantics
from .errors import InsufficientPairs, ShapeError
from .seeding import substream

#: normalization scales applied per path parameter before any network
FEATURE_SCALES = {
    "amplitude": 1.0,
    "tof": 1e-8,   # 10 ns
    "aoa": 0.5,
    "dfs": 50.0,   # Hz
}

DEFAULT_MAX_PATHS = 5


def featurize_semantics(
    semantics: PhysicalSemantics,
    max_paths: int = DEFAULT_MAX_PATHS,
    scales: dict = None,
) -> np.ndarray:
    """Fixed-length vector: [static slots..., dynamic slots...].

    Each slot is (amplitude, tof, aoa, dfs) divided by the configured
    scales; the dfs entry of a static slot is zero.  Paths are sorted by
    amplitude descending (ties broken on tof, then aoa, then dfs), so
    any permutation of the input lists produces the same vector.  Unused
    slots are zero-padded; excess paths are dropped.
    """
    if not semantics.all_paths:
        raise ShapeError("cannot featurize empty semantics")
    sc = dict(FEATURE_SCALES)
    if scales:
        sc.update(scales)

    def sort_key(p):
        return (-p.amplitude, p.tof, p.aoa, p.dfs if p.dfs is not None else 0.0)

    out = np.zeros(2 * max_paths * 4)
    for base, paths in (
        (0, sorted(semantics.environment_paths, key=sort_key)),
        (max_paths * 4, sorted(semantics.gesture_paths, key=sort_key)),
    ):
        for i, p in enumerate(paths[:max_paths]):
            off = base + 4 * i
            out[off + 0] = p.amplitude / sc["amplitude"]
            out[off + 1] = p.tof / sc["tof"]
            out[off + 2] = p.aoa / sc["aoa"]
            out[off + 3] = (p.dfs / sc["dfs"]) if p.dfs is not None else 0.0
    return out


@dataclass
class MapperArch:
    feature_dim: int = 2 * DEFAULT_MAX_PATHS * 4
    hidden: int = 16
    embed_dim: int = 8
    corr_hidden: int = 8
    corr_features: int = 4  # summaries of |w_j - w_k|


@dataclass
class MapperParams:
    """Flat parameter vectors for the embedding (embed_params) and scorer (score_params).

    ``center``/``spread`` define a fixed affine input standardization
    (f - center) / spread applied before the embedding network; they are
    estimated once by ``fit_mapping`` and stored here so inference sees
    the same transform.  Raw featurized vectors have large coordinates
    (ToF slots), which would otherwise park the tanh units on their flat
    tails and collapse all embedding distances.
    """

    embed_params: np.ndarray
    score_params: np.ndarray
    arch: MapperArch = field(default_factory=MapperArch)
    center: np.ndarray = None
    spread: float = 1.0

    def __post_init__(self):
        self.embed_params = np.asarray(self.embed_params, dtype=np.float64)
        self.score_params = np.asarray(self.score_params, dtype=np.float64)
        if self.embed_params.shape != (embed_param_dim(self.arch),):
            raise ShapeError("embed_params length does not match the mapper arch")
        if self.score_params.shape != (score_param_dim(self.arch),):
            raise ShapeError("score_params length does not match the mapper arch")
        if self.center is None:
            self.center = np.zeros(self.arch.feature_dim)
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.shape != (self.arch.feature_dim,):
            raise ShapeError("center length does not match the mapper arch")
        self.spread = float(self.spread)
        if not (self.spread > 0.0 and np.isfinite(self.spread)):
            raise ShapeError("spread must be a positive finite scalar")


def embed_param_dim(arch: MapperArch) -> int:
    return arch.hidden * arch.feature_dim + arch.hidden + arch.embed_dim * arch.hidden


def score_param_dim(arch: MapperArch) -> int:
    return arch.corr_hidden * arch.corr_features + arch.corr_hidden + arch.corr_hidden + 1


def init_mapper(
    arch: MapperArch = None,
    seed: int = 0,
    center=None,
    spread: float = 1.0,
) -> MapperParams:
    """Random starting point for the two networks.

    The first-layer scale assumes standardized inputs of roughly unit
    norm (what fit_mapping's center/spread produce), keeping tanh units
    active; the output-layer scale roughly preserves input distances in
    the embedding so that exp(-d^2) similarities start out informative
    rather than flat.
    """
    arch = arch or MapperArch()
    rng = substream(seed, "mapper", "init")
    embed_params = np.concatenate(
        [
            1.2 * rng.standard_normal(arch.hidden * arch.feature_dim),
            np.zeros(arch.hidden),
            rng.standard_normal(arch.embed_dim * arch.hidden)
            / math.sqrt(arch.hidden),
        ]
    )
    score_params = np.concatenate(
        [
            rng.standard_normal(arch.corr_hidden * arch.corr_features)
            / math.sqrt(arch.corr_features),
            np.zeros(arch.corr_hidden),
            rng.standard_normal(arch.corr_hidden) / math.sqrt(arch.corr_hidden),
            np.zeros(1),
        ]
    )
    return MapperParams(embed_params, score_params, arch, center=center, spread=spread)


def _unpack_embed(embed_params, arch):
    h, d, e = arch.hidden, arch.feature_dim, arch.embed_dim
    W1 = embed_params[: h * d].reshape(h, d)
    b1 = embed_params[h * d : h * d + h]
    W2 = embed_params[h * d + h :].reshape(e, h)
    return W1, b1, W2

def _unpack_score(score_params, arch):
    h, f = arch.corr_hidden, arch.corr_features
    V1 = score_params[: h * f].reshape(h, f)
    c1 = score_params[h * f : h * f + h]
    v2 = score_params[h * f + h : h * f + 2 * h]
    c2 = score_params[-1]
    return V1, c1, v2, c2


def embed(features, mapper: MapperParams) -> np.ndarray:
    """Low-dimensional semantic embedding: W2 tanh(W1 z + b1) with
    z = (f - center) / spread.

    The final layer is linear with no offset, so zero mapper weights
    embed everything at the origin.
    """
    W1, b1, W2 = _unpack_embed(mapper.embed_params, mapper.arch)
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (mapper.arch.feature_dim,):
        raise ShapeError(
            f"feature length {f.shape} != {(mapper.arch.feature_dim,)}"
        )
    z = (f - mapper.center) / mapper.spread
    return W2 @ np.tanh(W1 @ z + b1)


def similarity(emb_j, emb_k) -> float:
    """exp(-||e_j - e_k||^2): in (0, 1], equal to 1 iff the embeddings match."""
    emb_j = np.asarray(emb_j, dtype=np.float64)
    emb_k = np.asarray(emb_k, dtype=np.float64)
    if emb_j.shape != emb_k.shape:
        raise ShapeError("embedding dimensions differ")
    d = emb_j - emb_k
    return math.exp(-float(d @ d))


def _model_pair_features(w_j, w_k):
    u = np.abs(np.asarray(w_j, dtype=float) - np.asarray(w_k, dtype=float))
    ss = float(u @ u)
    return np.array(
        [u.mean(), math.sqrt(ss / u.size), u.max(), ss / (1.0 + ss)]
    )


def model_correlation(w_j, w_k, mapper: MapperParams) -> float:
    """Scored correlation of two model vectors, in (0, 1).

    The inputs enter only through order-invariant summaries of the
    elementwise |w_j - w_k|, so the score is symmetric by construction.
    """
    if np.asarray(w_j).shape != np.asarray(w_k).shape:
        raise ShapeError("model vectors differ in length")
    V1, c1, v2, c2 = _unpack_score(mapper.score_params, mapper.arch)
    t = _model_pair_features(w_j, w_k)
    z = np.tanh(V1 @ t + c1)
    return float(1.0 / (1.0 + math.exp(-(v2 @ z + c2))))


def _pair_indices(n):
    return [(j, k) for j in range(n) for k in range(j + 1, n)]


def mapping_loss(features_list, model_list, mapper: MapperParams) -> float:
    """Sum over unordered pairs of (correlation - similarity)^2."""
    embs = [embed(f, mapper) for f in features_list]
    total = 0.0
    for j, k in _pair_indices(len(features_list)):
        s = similarity(embs[j], embs[k])
        h = model_correlation(model_list[j], model_list[k], mapper)
        total += (h - s) ** 2
    return total


def _loss_and_grads(features_list, model_list, mapper):
    arch = mapper.arch
    W1, b1, W2 = _unpack_embed(mapper.embed_params, arch)
    V1, c1, v2, c2 = _unpack_score(mapper.score_params, arch)

    feats = [
        (np.asarray(f, dtype=float) - mapper.center) / mapper.spread
        for f in features_list
    ]
    hidden = [np.tanh(W1 @ f + b1) for f in feats]
    embs = [W2 @ h for h in hidden]
    pair_t = {}
    for j, k in _pair_indices(len(feats)):
        pair_t[(j, k)] = _model_pair_features(model_list[j], model_list[k])

    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gV1 = np.zeros_like(V1)
    gc1 = np.zeros_like(c1)
    gv2 = np.zeros_like(v2)
    gc2 = 0.0
    loss = 0.0

    for (j, k), t in pair_t.items():
        diff = embs[j] - embs[k]
        s = math.exp(-float(diff @ diff))
        z = np.tanh(V1 @ t + c1)
        logit = float(v2 @ z + c2)
        y = 1.0 / (1.0 + math.exp(-logit))
        r = y - s
        loss += r * r

        # scorer side
        dy = 2.0 * r * y * (1.0 - y)
        gv2 += dy * z
        gc2 += dy
        dz = dy * v2 * (1.0 - z**2)
        gV1 += np.outer(dz, t)
        gc1 += dz

        # embedding side: dL/dS = -2r; dS/d(diff) = -2 s diff
        ddiff = (-2.0 * r) * (-2.0 * s) * diff
        for sign, idx in ((1.0, j), (-1.0, k)):
            de = sign * ddiff
            gW2 += np.outer(de, hidden[idx])
            dh = (W2.T @ de) * (1.0 - hidden[idx] ** 2)
            gW1 += np.outer(dh, feats[idx])
            gb1 += dh

    g_delta = np.concatenate([gW1.ravel(), gb1, gW2.ravel()])
    g_psi = np.concatenate([gV1.ravel(), gc1, gv2, [gc2]])
    return loss, g_delta, g_psi


def fit_mapping(
    pairs,
    epochs: int = 200,
    lr: float = 0.05,
    arch: MapperArch = None,
    seed: int = 0,
):
    """Jointly fit the embedding and scorer on (semantics, model) pairs.

    ``pairs`` is a list of (feature_vector_or_semantics, model_vector).
    Full-batch gradient descent with a backtracking step: each epoch the
    step is halved until the loss decreases, so the recorded loss trace
    is strictly decreasing; fitting stops early once the relative
    improvement falls below machine-level noise.

    Returns (MapperParams, loss_trace).
    """
    if len(pairs) < 2:
        raise InsufficientPairs("need at least two (semantics, model) pairs")
    features_list = []
    model_list = []
    for sem, w in pairs:
        if isinstance(sem, PhysicalSemantics):
            sem = featurize_semantics(sem)
        features_list.append(np.asarray(sem, dtype=float))
        model_list.append(np.asarray(w, dtype=float))

    if arch is None:
        arch = MapperArch(feature_dim=len(features_list[0]))
    stacked = np.stack(features_list)
    center = stacked.mean(axis=0)
    # One global scale (not per-coordinate) so the relative geometry of
    # the receivers is preserved, just brought to unit magnitude.
    spread = float(np.sqrt(np.mean(np.sum((stacked - center) ** 2, axis=1))))
    if not spread > 1e-9:
        spread = 1.0
    mapper = init_mapper(arch, seed=seed, center=center, spread=spread)

    loss = mapping_loss(features_list, model_list, mapper)
    trace = [loss]
    step = lr
    for _ in range(epochs):
        loss, g_delta, g_psi = _loss_and_grads(
            features_list, model_list, mapper
        )
        g_norm_sq = float(g_delta @ g_delta + g_psi @ g_psi)
        if g_norm_sq == 0.0:
            break
        step = min(step * 2.0, lr * 16.0)
        improved = False
        while step > 1e-12:
            cand = MapperParams(
                mapper.embed_params - step * g_delta,
                mapper.score_params - step * g_psi,
                arch,
                center=mapper.center,
                spread=mapper.spread,
            )
            cand_loss = mapping_loss(features_list, model_list, cand)
            if cand_loss < loss:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        mapper = cand
        trace.append(cand_loss)
        if loss - cand_loss < 1e-15 * max(1.0, loss):
            break
    return mapper, trace
