"""Differentiable model plug-ins used by the training and transfer stages.

Every plug-in works on a flat float64 parameter vector and exposes
``loss(w, X, y)`` (mean data loss plus an L2 term), ``grad`` (analytic,
checked against central differences in the tests) and ``predict``.  The
multinomial logistic plug-in regularizes every coordinate, so its
objective is l2-strongly convex and (0.5*lam_max(Gram)+l2)-smooth — the
regime in which the convergence bounds are checked.  The small tanh
network is deliberately non-convex and is excluded from bound checks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArchMismatch, ShapeError


@dataclass
class ModelParams:
    """A flat parameter vector tagged with its architecture descriptor."""

    values: np.ndarray
    arch: dict

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError("model parameters must be a flat vector")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("model parameters must be finite")

    def copy(self):
        return ModelParams(self.values.copy(), dict(self.arch))


def check_same_arch(items):
    archs = [dict(it.arch) for it in items]
    for a in archs[1:]:
        if a != archs[0]:
            raise ArchMismatch(f"architectures differ: {archs[0]} vs {a}")


def _softmax(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _one_hot(y, num_classes):
    out = np.zeros((len(y), num_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


class LogisticRegression:
    """Softmax classifier with bias and full-coordinate L2."""

    def __init__(self, num_features, num_classes, l2=0.5):
        self.num_features = int(num_features)
        self.num_classes = int(num_classes)
        self.l2 = float(l2)
        self.dim = self.num_classes * (self.num_features + 1)

    @property
    def arch(self):
        return {
            "family": "logistic",
            "num_features": self.num_features,
            "num_classes": self.num_classes,
            "l2": self.l2,
        }

    def init_params(self, seed=None):
        return np.zeros(self.dim)

    def _weights(self, w):
        return w.reshape(self.num_classes, self.num_features + 1)

    def _augment(self, X):
        return np.hstack([X, np.ones((len(X), 1))])

    def loss(self, w, X, y):
        Xa = self._augment(X)
        W = self._weights(w)
        scores = Xa @ W.T
        shifted = scores - scores.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        ce = (log_norm - shifted[np.arange(len(y)), y]).mean()
        return float(ce + 0.5 * self.l2 * w @ w)

    def grad(self, w, X, y):
        Xa = self._augment(X)
        W = self._weights(w)
        P = _softmax(Xa @ W.T)
        G = (P - _one_hot(y, self.num_classes)).T @ Xa / len(y)
        return G.ravel() + self.l2 * w

    def predict(self, w, X):
        scores = self._augment(X) @ self._weights(w).T
        return np.argmax(scores, axis=1)

    def strong_convexity(self):
        return self.l2

    def smoothness(self, X, iters=100, seed=0):
        """Upper bound 0.5*lam_max(Gram)+l2, lam_max by power iteration."""
        Xa = self._augment(X)
        gram = Xa.T @ Xa / len(Xa)
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(gram.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            v = gram @ v
            lam = np.linalg.norm(v)
            if lam == 0.0:
                break
            v /= lam
        return 0.5 * float(lam) + self.l2


class TanhNetwork:
    """One-hidden-layer tanh classifier (non-convex plug-in)."""

    def __init__(self, num_features, hidden, num_classes, l2=1e-3):
        self.num_features = int(num_features)
        self.hidden = int(hidden)
        self.num_classes = int(num_classes)
        self.l2 = float(l2)
        d, h, c = self.num_features, self.hidden, self.num_classes
        self._shapes = [(h, d), (h,), (c, h), (c,)]
        self.dim = h * d + h + c * h + c

    @property
    def arch(self):
        return {
            "family": "tanh-net",
            "num_features": self.num_features,
            "hidden": self.hidden,
            "num_classes": self.num_classes,
            "l2": self.l2,
        }

    def init_params(self, seed=0):
        rng = np.random.default_rng(seed)
        return 0.1 * rng.standard_normal(self.dim)

    def _unpack(self, w):
        parts, off = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            parts.append(w[off : off + size].reshape(shape))
            off += size
        return parts

    def _forward(self, w, X):
        W1, b1, W2, b2 = self._unpack(w)
        H = np.tanh(X @ W1.T + b1)
        return H, H @ W2.T + b2

    def loss(self, w, X, y):
        _, scores = self._forward(w, X)
        shifted = scores - scores.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        ce = (log_norm - shifted[np.arange(len(y)), y]).mean()
        return float(ce + 0.5 * self.l2 * w @ w)

    def grad(self, w, X, y):
        W1, b1, W2, b2 = self._unpack(w)
        H, scores = self._forward(w, X)
        dscore = (_softmax(scores) - _one_hot(y, self.num_classes)) / len(y)
        gW2 = dscore.T @ H
        gb2 = dscore.sum(axis=0)
        back = (dscore @ W2) * (1.0 - H**2)
        gW1 = back.T @ X
        gb1 = back.sum(axis=0)
        flat = np.concatenate(
            [gW1.ravel(), gb1.ravel(), gW2.ravel(), gb2.ravel()]
        )
        return flat + self.l2 * w

    def predict(self, w, X):
        _, scores = self._forward(w, X)
        return np.argmax(scores, axis=1)


class ScalarQuadratic:
    """1-D sanity model: loss (w - target)^2, data ignored."""

    def __init__(self, target=3.0):
        self.target = float(target)
        self.dim = 1

    @property
    def arch(self):
        return {"family": "quadratic", "target": self.target}

    def init_params(self, seed=None):
        return np.zeros(1)

    def loss(self, w, X, y):
        return float((w[0] - self.target) ** 2)

    def grad(self, w, X, y):
        return np.array([2.0 * (w[0] - self.target)])

    def predict(self, w, X):
        return np.zeros(len(X), dtype=int)


def evaluate(model, w, X, y):
    """Loss and accuracy of a parameter vector on one dataset split."""
    if len(X) == 0:
        raise ShapeError("cannot evaluate on an empty split")
    pred = model.predict(np.asarray(w, dtype=float), X)
    return {
        "loss": model.loss(np.asarray(w, dtype=float), X, y),
        "accuracy": float(np.mean(pred == y)),
    }
