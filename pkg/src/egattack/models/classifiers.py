"""The seven black-box classifier kinds.

Every model exposes ``fit``, ``predict_proba`` (two columns, p0 + p1 = 1) and
``predict`` (p1 >= 0.5 means class 1, so an exact tie goes to the positive
class). Fitted arrays are frozen read-only.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import ConvergenceWarning, ModelError, NotFittedError
from ..seeding import rng_for
from .tree import Tree, build_tree, resolve_max_features

FORMAT = "egattack-model"
FORMAT_VERSION = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _pos_int(v):
    return _is_int(v) and v >= 1


def _opt_depth(v):
    return v is None or _pos_int(v)


def _pos_num(v):
    return _is_num(v) and v > 0


def _max_features(v):
    if v is None or v in ("sqrt", "log2"):
        return True
    if _is_int(v):
        return v >= 1
    return isinstance(v, float) and 0 < v <= 1


def _fraction_or_count(v):
    return (_is_int(v) and v >= 1) or (isinstance(v, float) and 0 < v <= 1)


def _freeze(*arrays):
    for a in arrays:
        if isinstance(a, np.ndarray):
            a.setflags(write=False)


class Classifier:
    """Shared plumbing: hyperparameter checking, shape checks, persistence."""

    kind = ""
    # name -> (default, validator)
    params = {}

    def __init__(self, seed=0, **hyperparams):
        unknown = set(hyperparams) - set(self.params)
        if unknown:
            raise ModelError(f"{self.kind}: unknown hyperparameter(s) {sorted(unknown)}")
        hp = {}
        for name, (default, ok) in self.params.items():
            v = hyperparams.get(name, default)
            if isinstance(v, list):
                v = tuple(v)
            if not ok(v):
                raise ModelError(f"{self.kind}: invalid value {v!r} for hyperparameter {name!r}")
            hp[name] = v
        self.hyperparams = hp
        self.seed = int(seed)
        self.n_features = None

    def __repr__(self):
        return f"{type(self).__name__}({self.hyperparams})"

    # -- training -----------------------------------------------------------
    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y).astype(np.int64)
        if X.ndim != 2 or len(X) == 0:
            raise ModelError(f"{self.kind}: training data must be a non-empty 2-D array")
        if len(np.unique(y)) < 2:
            raise ModelError(f"{self.kind}: training data contains a single class")
        self.n_features = X.shape[1]
        self._fit(X, y, rng_for(self.seed, "fit", self.kind))
        return self

    def _fit(self, X, y, rng):
        raise NotImplementedError

    # -- prediction ---------------------------------------------------------
    def _check(self, X):
        if self.n_features is None:
            raise NotFittedError(f"{self.kind}: model is not fitted")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"{self.kind}: expected {self.n_features} features, got shape {np.shape(X)}")
        return X, single

    def positive_proba(self, X):
        """Risk score p1 for each row."""
        X, single = self._check(X)
        p1 = np.clip(self._p1(X), 0.0, 1.0)
        return p1[0] if single else p1

    def predict_proba(self, X):
        X, single = self._check(X)
        p1 = np.clip(self._p1(X), 0.0, 1.0)
        out = np.column_stack([1.0 - p1, p1])
        return out[0] if single else out

    def predict(self, X):
        p1 = self.positive_proba(X)
        return (np.asarray(p1) >= 0.5).astype(np.int64)

    def _p1(self, X):
        raise NotImplementedError

    # -- persistence --------------------------------------------------------
    def to_dict(self):
        if self.n_features is None:
            raise NotFittedError(f"{self.kind}: cannot serialize an unfitted model")
        hp = {k: list(v) if isinstance(v, tuple) else v for k, v in self.hyperparams.items()}
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "hyperparams": hp,
            "n_features": self.n_features,
            "state": self._state(),
        }

    def _state(self):
        raise NotImplementedError

    def _load_state(self, state):
        raise NotImplementedError


class _Standardizer:
    @staticmethod
    def fit(X):
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        return mu, sd


class LogisticRegression(Classifier):
    """Batch gradient descent on L2-regularised mean log-loss.

    Inputs are standardised internally. The step is 1/L for the loss's
    Lipschitz constant; Nesterov momentum with adaptive restart keeps
    near-separable fits from crawling.
    """

    kind = "LR"
    params = {
        "C": (1.0, _pos_num),
        "max_iter": (1000, _pos_int),
        "tol": (1e-6, _pos_num),
    }

    def _fit(self, X, y, rng):
        self.mu_, self.sd_ = _Standardizer.fit(X)
        Z = (X - self.mu_) / self.sd_
        n, d = Z.shape
        reg = 1.0 / (self.hyperparams["C"] * n)
        Za = np.hstack([Z, np.ones((n, 1))])
        smax = np.linalg.norm(Za, 2)
        step = 1.0 / (0.25 * smax**2 / n + reg)
        theta = np.zeros(d + 1)
        look, prev, t = theta.copy(), theta.copy(), 1.0
        converged = False
        for _ in range(self.hyperparams["max_iter"]):
            # Nesterov-accelerated batch gradient step, restarted when it overshoots
            p = _sigmoid(Za @ look)
            grad = Za.T @ (p - y) / n
            grad[:d] += reg * look[:d]
            if np.linalg.norm(grad) < self.hyperparams["tol"]:
                theta, converged = look, True
                break
            theta = look - step * grad
            if grad @ (theta - prev) > 0:
                t = 1.0
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            look = theta + ((t - 1.0) / t_next) * (theta - prev)
            prev, t = theta, t_next
        if not converged:
            warnings.warn(f"LR did not converge in {self.hyperparams['max_iter']} iterations", ConvergenceWarning)
        self.coef_, self.intercept_ = theta[:d].copy(), float(theta[d])
        _freeze(self.mu_, self.sd_, self.coef_)

    def _p1(self, X):
        return _sigmoid(((X - self.mu_) / self.sd_) @ self.coef_ + self.intercept_)

    def _state(self):
        return {"mean": self.mu_.tolist(), "scale": self.sd_.tolist(),
                "coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _load_state(self, s):
        self.mu_ = np.asarray(s["mean"], float)
        self.sd_ = np.asarray(s["scale"], float)
        self.coef_ = np.asarray(s["coef"], float)
        self.intercept_ = float(s["intercept"])
        _freeze(self.mu_, self.sd_, self.coef_)


_TREE_PARAMS = {
    "max_depth": (None, _opt_depth),
    "min_samples_split": (2, lambda v: _is_int(v) and v >= 2),
    "min_samples_leaf": (1, _pos_int),
    "criterion": ("gini", lambda v: v in ("gini", "entropy")),
}


def _tree_kwargs(hp):
    return {k: hp[k] for k in ("max_depth", "min_samples_split", "min_samples_leaf", "criterion")}


class DecisionTree(Classifier):
    kind = "DT"
    params = {**_TREE_PARAMS, "max_features": (None, _max_features)}

    def _fit(self, X, y, rng):
        self.tree_ = build_tree(X, y, max_features=self.hyperparams["max_features"], rng=rng,
                                **_tree_kwargs(self.hyperparams))

    def _p1(self, X):
        return self.tree_.predict_value(X)

    def _state(self):
        return {"tree": self.tree_.to_dict()}

    def _load_state(self, s):
        self.tree_ = Tree.from_dict(s["tree"])


class RandomForest(Classifier):
    """Bootstrap trees with per-split feature subsampling; p1 averages the trees' leaf probabilities."""

    kind = "RF"
    params = {
        **_TREE_PARAMS,
        "n_estimators": (50, _pos_int),
        "max_features": ("sqrt", _max_features),
        "bootstrap": (True, lambda v: isinstance(v, bool)),
    }

    def _fit(self, X, y, rng):
        n = len(y)
        self.trees_ = []
        for t in range(self.hyperparams["n_estimators"]):
            trng = rng_for(self.seed, "rf-tree", t)
            idx = trng.integers(0, n, size=n) if self.hyperparams["bootstrap"] else np.arange(n)
            if len(np.unique(y[idx])) < 2:
                idx = np.arange(n)
            self.trees_.append(build_tree(X[idx], y[idx], max_features=self.hyperparams["max_features"],
                                          rng=trng, **_tree_kwargs(self.hyperparams)))

    def _p1(self, X):
        acc = np.zeros(len(X))
        for t in self.trees_:
            acc += t.predict_value(X)
        return acc / len(self.trees_)

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees_]}

    def _load_state(self, s):
        self.trees_ = [Tree.from_dict(t) for t in s["trees"]]


class Bagging(Classifier):
    """Bootstrap-aggregated unpruned trees, each on its own feature subset."""

    kind = "BAG"
    params = {
        **_TREE_PARAMS,
        "n_estimators": (10, _pos_int),
        "max_samples": (1.0, _fraction_or_count),
        "max_features": (1.0, _fraction_or_count),
        "bootstrap": (True, lambda v: isinstance(v, bool)),
    }

    def _fit(self, X, y, rng):
        n, d = X.shape
        ms = self.hyperparams["max_samples"]
        m = max(1, int(ms * n)) if isinstance(ms, float) else min(int(ms), n)
        mf = self.hyperparams["max_features"]
        k = resolve_max_features(mf, d)
        self.trees_, self.features_ = [], []
        for t in range(self.hyperparams["n_estimators"]):
            trng = rng_for(self.seed, "bag-tree", t)
            idx = trng.integers(0, n, size=m) if self.hyperparams["bootstrap"] else trng.permutation(n)[:m]
            if len(np.unique(y[idx])) < 2:
                idx = np.arange(n)
            feats = np.arange(d) if k == d else np.sort(trng.permutation(d)[:k])
            self.features_.append(feats)
            self.trees_.append(build_tree(X[np.ix_(idx, feats)], y[idx], rng=trng,
                                          **_tree_kwargs(self.hyperparams)))

    def _p1(self, X):
        acc = np.zeros(len(X))
        for t, f in zip(self.trees_, self.features_):
            acc += t.predict_value(X[:, f])
        return acc / len(self.trees_)

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees_], "features": [f.tolist() for f in self.features_]}

    def _load_state(self, s):
        self.trees_ = [Tree.from_dict(t) for t in s["trees"]]
        self.features_ = [np.asarray(f, dtype=np.int64) for f in s["features"]]


class AdaBoost(Classifier):
    """Discrete SAMME on depth-1 stumps.

    With two classes the stage weight is ``lr * log((1 - err) / err)`` and
    p1 = sigmoid(sum of weight * (+1 / -1 stump vote)).
    """

    kind = "ADA"
    params = {
        "n_estimators": (50, _pos_int),
        "learning_rate": (1.0, _pos_num),
    }

    def _fit(self, X, y, rng):
        n = len(y)
        w = np.full(n, 1.0 / n)
        lr = self.hyperparams["learning_rate"]
        self.stumps_, self.alphas_ = [], []
        for m in range(self.hyperparams["n_estimators"]):
            stump = build_tree(X, y, sample_weight=w, max_depth=1, rng=rng_for(self.seed, "ada", m))
            h = (stump.predict_value(X) >= 0.5).astype(np.int64)
            miss = h != y
            err = float(w[miss].sum() / w.sum())
            if err >= 0.5 and m > 0:
                break
            if err <= 0.0:
                self.stumps_.append(stump)
                self.alphas_.append(lr * math.log((1 - 1e-10) / 1e-10))
                break
            alpha = lr * math.log((1.0 - err) / err) if err < 0.5 else 0.0
            self.stumps_.append(stump)
            self.alphas_.append(alpha)
            w = w * np.exp(alpha * miss)
            w /= w.sum()
        self.alphas_ = np.asarray(self.alphas_, dtype=float)
        _freeze(self.alphas_)

    def _p1(self, X):
        F = np.zeros(len(X))
        for a, s in zip(self.alphas_, self.stumps_):
            F += a * np.where(s.predict_value(X) >= 0.5, 1.0, -1.0)
        return _sigmoid(F)

    def _state(self):
        return {"alphas": self.alphas_.tolist(), "stumps": [s.to_dict() for s in self.stumps_]}

    def _load_state(self, s):
        self.alphas_ = np.asarray(s["alphas"], dtype=float)
        self.stumps_ = [Tree.from_dict(t) for t in s["stumps"]]


class GradientBoosting(Classifier):
    """Additive regression trees fitted to log-loss gradients, Newton leaf values."""

    kind = "GBC"
    params = {
        "n_estimators": (100, _pos_int),
        "learning_rate": (0.1, _pos_num),
        "max_depth": (3, _pos_int),
        "min_samples_leaf": (1, _pos_int),
        "subsample": (1.0, lambda v: _is_num(v) and 0 < v <= 1),
    }

    def _fit(self, X, y, rng):
        n = len(y)
        prior = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.init_ = float(math.log(prior / (1 - prior)))
        F = np.full(n, self.init_)
        lr = self.hyperparams["learning_rate"]
        m_sub = max(2, int(round(self.hyperparams["subsample"] * n)))
        self.trees_ = []
        for m in range(self.hyperparams["n_estimators"]):
            trng = rng_for(self.seed, "gbc", m)
            p = _sigmoid(F)
            r = y - p
            idx = np.arange(n) if m_sub >= n else np.sort(trng.permutation(n)[:m_sub])
            tree = build_tree(X[idx], r[idx], criterion="mse", max_depth=self.hyperparams["max_depth"],
                              min_samples_leaf=self.hyperparams["min_samples_leaf"], rng=trng)
            leaves = tree.apply(X[idx])
            hess = p[idx] * (1 - p[idx])
            value = tree.value.copy()
            for leaf in np.unique(leaves):
                sel = leaves == leaf
                value[leaf] = r[idx][sel].sum() / max(hess[sel].sum(), 1e-12)
            tree.value = value
            self.trees_.append(tree)
            F = F + lr * tree.predict_value(X)

    def decision_function(self, X):
        X, _ = self._check(X)
        F = np.full(len(X), self.init_)
        for t in self.trees_:
            F += self.hyperparams["learning_rate"] * t.predict_value(X)
        return F

    def _p1(self, X):
        return _sigmoid(self.decision_function(X))

    def _state(self):
        return {"init": self.init_, "trees": [t.to_dict() for t in self.trees_]}

    def _load_state(self, s):
        self.init_ = float(s["init"])
        self.trees_ = [Tree.from_dict(t) for t in s["trees"]]


class MLP(Classifier):
    """ReLU network with one or two hidden layers and a sigmoid output.

    Full-batch gradient descent with a fixed step; a step that raises the
    loss is undone and the step halved.
    """

    kind = "MLP"
    params = {
        "hidden_layer_sizes": ((16,), lambda v: isinstance(v, tuple) and 1 <= len(v) <= 2
                               and all(_pos_int(h) for h in v)),
        "learning_rate": (0.5, _pos_num),
        "max_iter": (500, _pos_int),
        "alpha": (1e-4, lambda v: _is_num(v) and v >= 0),
        "tol": (1e-7, _pos_num),
    }

    def _forward(self, Z, weights, biases):
        acts = [Z]
        h = Z
        for W, b in zip(weights[:-1], biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
            acts.append(h)
        out = _sigmoid(h @ weights[-1] + biases[-1]).ravel()
        return acts, out

    def _loss(self, out, y, weights):
        eps = 1e-12
        ll = -np.mean(y * np.log(out + eps) + (1 - y) * np.log(1 - out + eps))
        return ll + 0.5 * self.hyperparams["alpha"] * sum((W**2).sum() for W in weights) / len(y)

    def _fit(self, X, y, rng):
        self.mu_, self.sd_ = _Standardizer.fit(X)
        Z = (X - self.mu_) / self.sd_
        n = len(y)
        sizes = [Z.shape[1], *self.hyperparams["hidden_layer_sizes"], 1]
        weights, biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (a + b))
            weights.append(rng.uniform(-lim, lim, size=(a, b)))
            biases.append(np.zeros(b))
        lr = self.hyperparams["learning_rate"]
        alpha = self.hyperparams["alpha"]
        acts, out = self._forward(Z, weights, biases)
        loss = self._loss(out, y, weights)
        for _ in range(self.hyperparams["max_iter"]):
            delta = ((out - y) / n)[:, None]
            gW, gb = [None] * len(weights), [None] * len(weights)
            for i in range(len(weights) - 1, -1, -1):
                gW[i] = acts[i].T @ delta + alpha * weights[i] / n
                gb[i] = delta.sum(axis=0)
                if i:
                    delta = (delta @ weights[i].T) * (acts[i] > 0)
            while True:
                nw = [W - lr * g for W, g in zip(weights, gW)]
                nb = [b - lr * g for b, g in zip(biases, gb)]
                nacts, nout = self._forward(Z, nw, nb)
                nloss = self._loss(nout, y, nw)
                if np.isfinite(nloss) and nloss <= loss:
                    break
                lr *= 0.5
                if lr < 1e-10:
                    break
            if lr < 1e-10:
                warnings.warn("MLP step size collapsed; stopping early", ConvergenceWarning)
                break
            improved = loss - nloss
            weights, biases, acts, out, loss = nw, nb, nacts, nout, nloss
            if improved < self.hyperparams["tol"]:
                break
        self.weights_, self.biases_ = weights, biases
        _freeze(self.mu_, self.sd_, *weights, *biases)

    def _p1(self, X):
        return self._forward((X - self.mu_) / self.sd_, self.weights_, self.biases_)[1]

    def _state(self):
        return {"mean": self.mu_.tolist(), "scale": self.sd_.tolist(),
                "weights": [W.tolist() for W in self.weights_],
                "biases": [b.tolist() for b in self.biases_]}

    def _load_state(self, s):
        self.mu_ = np.asarray(s["mean"], float)
        self.sd_ = np.asarray(s["scale"], float)
        self.weights_ = [np.asarray(W, float) for W in s["weights"]]
        self.biases_ = [np.asarray(b, float) for b in s["biases"]]


MODEL_KINDS = {cls.kind: cls for cls in (LogisticRegression, DecisionTree, RandomForest, MLP,
                                          AdaBoost, Bagging, GradientBoosting)}


def model_class(kind):
    try:
        return MODEL_KINDS[kind]
    except KeyError:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}") from None


def from_dict(d):
    if d.get("format") != FORMAT:
        raise ModelError("not a serialized egattack model")
    if d.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {d.get('version')}")
    clf = model_class(d["kind"])(seed=d["seed"], **d["hyperparams"])
    clf.n_features = int(d["n_features"])
    clf._load_state(d["state"])
    return clf
