"""Multi-output regression surrogates for log h_T and the stratified path sampler.

Three regressors share one interface (``fit(X, Y)`` / ``predict(X)``):

* ``LinearRegressor(basis="none")``: ordinary least squares with intercept.
* ``LinearRegressor(basis="hermite", degree=d)``: OLS on probabilists'
  Hermite polynomials of the z-scored predictors (total degree <= d).
* ``RandomForest``: bagged CART trees with a summed-variance split
  criterion over all outputs; the prediction is the average of the trees.

All targets are handled at once: one shared design matrix with ``n``
right-hand sides, or one forest with ``n``-vector leaves.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import ordered_map
from .errors import InvalidBudget, RankDeficient
from .paths import STREAM_FOREST, STREAM_SAMPLE, path_rng

FORMAT_VERSION = 1


def hermite_basis(x, degree: int) -> np.ndarray:
    """Probabilists' Hermite values ``He_0(x) .. He_d(x)`` along a new last axis."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for k in range(1, degree):
        out[..., k + 1] = x * out[..., k] - k * out[..., k - 1]
    return out


def _multi_indices(p: int, degree: int):
    """Exponent tuples of total degree <= degree, constant first."""
    idx = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(p), total):
            e = [0] * p
            for c in combo:
                e[c] += 1
            idx.append(tuple(e))
    return np.array(idx, dtype=int).reshape(len(idx), p)


@dataclass
class TrainingSet:
    """Predictors ``X`` (N, p) and targets ``Y`` (N, n)."""

    X: np.ndarray
    Y: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("training data contains non-finite entries")


class Regressor:
    """Common interface of the surrogate models."""

    kind = "abstract"

    def fit(self, X, Y=None) -> "Regressor":
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} predictors, got {X.shape[1]}")
        return X


class LinearRegressor(Regressor):
    """OLS on raw (``basis="none"``) or Hermite-expanded z-scored predictors."""

    def __init__(self, basis: str = "hermite", degree: int = 3):
        if basis not in ("none", "hermite"):
            raise ValueError("basis must be 'none' or 'hermite'")
        self.basis = basis
        self.degree = 1 if basis == "none" else int(degree)
        self.kind = "linear" if basis == "none" else "hermite"

    def _design(self, X):
        z = (X - self.mean_) / self.scale_
        if self.basis == "none":
            return np.column_stack([np.ones(len(z)), z])
        He = hermite_basis(z, self.degree)  # (N, p, d+1)
        cols = [np.prod(He[:, np.arange(z.shape[1]), e], axis=1) for e in self.exponents_]
        return np.column_stack(cols)

    def fit(self, X, Y=None) -> "LinearRegressor":
        ts = X if isinstance(X, TrainingSet) else TrainingSet(X, Y)
        X, Y = ts.X, ts.Y
        self.n_features_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        if np.any(self.scale_ == 0):
            raise RankDeficient("a predictor is constant on the training sample")
        self.exponents_ = _multi_indices(self.n_features_, self.degree)
        A = self._design(X)
        if A.shape[0] < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
            raise RankDeficient(
                f"design matrix of shape {A.shape} does not have full column rank"
            )
        self.coef_, *_ = np.linalg.lstsq(A, Y, rcond=None)
        return self

    def predict(self, X) -> np.ndarray:
        return self._design(self._check_X(X)) @ self.coef_

    @property
    def intercept_(self) -> np.ndarray:
        """Intercept in the original predictor units (``basis="none"`` only)."""
        self._raw_only()
        return self.coef_[0] - (self.mean_ / self.scale_) @ self.coef_[1:]

    @property
    def slope_(self) -> np.ndarray:
        """Slopes in original units, shape ``(p, n_outputs)`` (``basis="none"`` only)."""
        self._raw_only()
        return self.coef_[1:] / self.scale_[:, None]

    def _raw_only(self):
        if self.basis != "none":
            raise AttributeError("raw coefficients exist for the plain linear basis only")

    def to_arrays(self) -> dict:
        return {
            "mean": self.mean_, "scale": self.scale_,
            "exponents": self.exponents_, "coef": self.coef_,
        }

    def meta(self) -> dict:
        return {"kind": self.kind, "basis": self.basis, "degree": self.degree}


# --------------------------------------------------------------------- trees


def _best_split(X, Y, rows, min_leaf, block_elems=1 << 22):
    """Best (feature, threshold) by summed squared error over all outputs.

    Features are scanned in blocks so each block's sorted cumulative sums
    fit in about ``block_elems`` floats.
    """
    n_s = rows.size
    if n_s < 2 * min_leaf:
        return None
    Xsub = X[rows]
    Ysub = Y[rows]
    p, r = Xsub.shape[1], Ysub.shape[1]
    total = Ysub.sum(axis=0)
    base = total @ total / n_s
    n_left = np.arange(1, n_s)[:, None]
    pos = np.arange(n_s - 1)[:, None]
    edge = (pos >= min_leaf - 1) & (pos <= n_s - 1 - min_leaf)
    best = (-np.inf, None, None)
    step = max(1, block_elems // max(1, n_s * r))
    for f0 in range(0, p, step):
        xb = Xsub[:, f0:f0 + step]
        order = np.argsort(xb, axis=0, kind="stable")
        xs = np.take_along_axis(xb, order, axis=0)
        csum = np.cumsum(Ysub[order], axis=0)[:-1]  # (n_s - 1, block, r)
        score = np.einsum("ifj,ifj->if", csum, csum) / n_left
        csum -= total
        score += np.einsum("ifj,ifj->if", csum, csum) / (n_s - n_left)
        valid = (xs[:-1] < xs[1:]) & edge
        score = np.where(valid, score, -np.inf)
        flat = int(np.argmax(score.T))  # feature-major: lowest feature wins ties
        fb, i = divmod(flat, n_s - 1)
        if score[i, fb] > best[0]:
            lo, hi = xs[i, fb], xs[i + 1, fb]
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            best = (score[i, fb], f0 + fb, thr)
    # gain = drop in summed squared error; ignore rounding-level gains
    ss = float(np.einsum("ij,ij->", Ysub, Ysub))
    if best[1] is None or best[0] - base <= 1e-12 * ss:
        return None
    return best[1], best[2]


class DecisionTree:
    """CART regression tree stored as flat arrays (portable)."""

    def __init__(self, max_depth: int = 5, min_leaf: int = 1):
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)

    def fit(self, X, Y, rows=None, split_targets=None) -> "DecisionTree":
        """Grow the tree on ``rows`` of ``(X, Y)``.

        ``split_targets`` (defaults to ``Y``) is used for the split search
        only; any orthogonal projection of the centred targets gives the same
        splits, which lets wide targets be searched in a reduced basis.
        """
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        S = Y if split_targets is None else np.asarray(split_targets, dtype=float)
        if rows is None:
            rows = np.arange(X.shape[0])
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(r):
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            value.append(Y[r].mean(axis=0))
            return len(feature) - 1

        stack = [(new_node(rows), rows, 0)]
        while stack:
            node, r, depth = stack.pop()
            if depth >= self.max_depth:
                continue
            split = _best_split(X, S, r, self.min_leaf)
            if split is None:
                continue
            f, thr = split
            go_left = X[r, f] <= thr
            feature[node], threshold[node] = f, thr
            lnode = new_node(r[go_left])
            rnode = new_node(r[~go_left])
            left[node], right[node] = lnode, rnode
            stack.append((rnode, r[~go_left], depth + 1))
            stack.append((lnode, r[go_left], depth + 1))
        self.feature = np.array(feature, dtype=int)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=int)
        self.right = np.array(right, dtype=int)
        self.value = np.array(value, dtype=float)
        return self

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            active = self.left[node] >= 0
            if not active.any():
                break
            f = self.feature[node]
            go_left = X[rows, np.maximum(f, 0)] <= self.threshold[node]
            step = np.where(go_left, self.left[node], self.right[node])
            node = np.where(active, step, node)
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(np.asarray(X, dtype=float))]


def _split_basis(Y, rtol=1e-10, rank=None):
    """Centred targets in their numerically nonzero principal directions.

    Split scores are invariant under centring and orthogonal maps; dropping
    directions with singular value below ``rtol`` times the largest changes
    them by a relative ``rtol**2`` at most. A ``rank`` additionally caps the
    number of directions (an approximation, off by default).
    """
    Yc = Y - Y.mean(axis=0)
    if Y.shape[1] <= 8:
        return Yc
    _, sv, Vt = np.linalg.svd(Yc, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        return Yc[:, :1]
    r = int(np.sum(sv > rtol * sv[0]))
    if rank:
        r = min(r, int(rank))
    return Yc @ Vt[:r].T


class RandomForest(Regressor):
    """Bagged multi-output CART trees; prediction is the mean over trees.

    Every split considers all predictors; the randomness comes from the
    bootstrap resamples, seeded per tree.
    """

    kind = "rf"

    def __init__(self, n_trees=100, max_depth=5, min_leaf=1, bootstrap=True, seed=0, threads=None,
                 split_rank=None):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.bootstrap = bool(bootstrap)
        self.seed = int(seed)
        self.threads = threads
        self.split_rank = split_rank

    def fit(self, X, Y=None) -> "RandomForest":
        ts = X if isinstance(X, TrainingSet) else TrainingSet(X, Y)
        X, Y = ts.X, ts.Y
        N = X.shape[0]
        if N < 1:
            raise ValueError("need at least one training row")
        self.n_features_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        S = _split_basis(Y, rank=self.split_rank)

        def grow(t):
            if self.bootstrap:
                rows = np.sort(path_rng(self.seed, STREAM_FOREST, t).integers(0, N, size=N))
            else:
                rows = np.arange(N)
            return DecisionTree(self.max_depth, self.min_leaf).fit(X, Y, rows, S)

        self.trees_ = ordered_map(grow, range(self.n_trees), self.threads)
        return self

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        acc = np.zeros((X.shape[0], self.n_outputs_))
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc / len(self.trees_)

    def to_arrays(self) -> dict:
        out = {}
        for t, tree in enumerate(self.trees_):
            for name in ("feature", "threshold", "left", "right", "value"):
                out[f"tree{t}_{name}"] = getattr(tree, name)
        return out

    def meta(self) -> dict:
        return {
            "kind": self.kind, "n_trees": self.n_trees, "max_depth": self.max_depth,
            "min_leaf": self.min_leaf, "bootstrap": self.bootstrap, "seed": self.seed,
            "split_rank": self.split_rank,
        }


def fit_linear(ts: TrainingSet, basis="none", degree=3) -> LinearRegressor:
    return LinearRegressor(basis=basis, degree=degree).fit(ts)


def fit_random_forest(ts: TrainingSet, n_trees=100, max_depth=5, min_leaf=1, seed=0, threads=None):
    return RandomForest(n_trees, max_depth, min_leaf, seed=seed, threads=threads).fit(ts)


def make_regressor(kind: str, *, degree=3, n_trees=100, max_depth=5, min_leaf=1, seed=0, threads=None,
                   split_rank=None):
    """Factory keyed by the method names ``linear``, ``hermite`` and ``rf``."""
    if kind == "linear":
        return LinearRegressor(basis="none")
    if kind == "hermite":
        return LinearRegressor(basis="hermite", degree=degree)
    if kind == "rf":
        return RandomForest(n_trees, max_depth, min_leaf, seed=seed, threads=threads,
                            split_rank=split_rank)
    raise ValueError(f"unknown regressor kind {kind!r}")


# ------------------------------------------------------------ serialization


def save_regressor(reg: Regressor, path) -> None:
    """Write a fitted regressor to an ``.npz`` archive.

    The archive holds plain numeric arrays plus a JSON ``meta`` string, see
    the README for the layout.
    """
    meta = dict(reg.meta(), format_version=FORMAT_VERSION,
                n_features=reg.n_features_, n_outputs=reg.n_outputs_)
    np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)), **reg.to_arrays())


def load_regressor(path) -> Regressor:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in z.files if k != "meta"}
    if meta["kind"] in ("linear", "hermite"):
        reg = LinearRegressor(basis=meta["basis"], degree=meta["degree"])
        reg.mean_, reg.scale_ = arrays["mean"], arrays["scale"]
        reg.exponents_, reg.coef_ = arrays["exponents"], arrays["coef"]
    elif meta["kind"] == "rf":
        reg = RandomForest(meta["n_trees"], meta["max_depth"], meta["min_leaf"],
                           meta["bootstrap"], meta["seed"], split_rank=meta.get("split_rank"))
        reg.trees_ = []
        for t in range(meta["n_trees"]):
            tree = DecisionTree(meta["max_depth"], meta["min_leaf"])
            for name in ("feature", "threshold", "left", "right", "value"):
                setattr(tree, name, arrays[f"tree{t}_{name}"])
            reg.trees_.append(tree)
    else:
        raise ValueError(f"unknown regressor kind {meta['kind']!r}")
    reg.n_features_ = meta["n_features"]
    reg.n_outputs_ = meta["n_outputs"]
    return reg


# ----------------------------------------------------------------- sampling


def default_per_bin_goal(N: int, n_bins: int) -> int:
    return math.ceil(0.1 * N / n_bins)


def stratified_sample(values, N: int, n_bins: int = 20, per_bin_goal=None, seed: int = 0) -> np.ndarray:
    """Choose ``N`` of ``len(values)`` indices, covering the whole predictor range.

    The range ``[min, max]`` is cut into ``n_bins`` equal bins; every
    nonempty bin first contributes ``min(goal, bin size)`` indices, the
    remaining quota is drawn uniformly from the unchosen indices. Returns the
    sorted indices.
    """
    values = np.asarray(values, dtype=float)
    K = values.size
    if N > K:
        raise InvalidBudget(f"cannot sample N={N} of K={K} paths")
    if N < 1:
        raise InvalidBudget("N must be >= 1")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if per_bin_goal is None:
        per_bin_goal = default_per_bin_goal(N, n_bins)
    rng = path_rng(seed, STREAM_SAMPLE, 0)
    if N == K:
        return np.arange(K)
    lo, hi = values.min(), values.max()
    if hi > lo:
        edges = np.linspace(lo, hi, n_bins + 1)
        bin_of = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, n_bins - 1)
    else:
        bin_of = np.zeros(K, dtype=int)
    members = [np.flatnonzero(bin_of == b) for b in range(n_bins)]
    sizes = np.array([m.size for m in members])
    goal = int(per_bin_goal)
    while goal > 0 and np.minimum(sizes, goal).sum() > N:
        goal -= 1
    chosen = np.zeros(K, dtype=bool)
    for m in members:
        take = min(goal, m.size)
        if take:
            chosen[rng.choice(m, size=take, replace=False)] = True
    rest = N - int(chosen.sum())
    if rest > 0:
        pool = np.flatnonzero(~chosen)
        chosen[rng.choice(pool, size=rest, replace=False)] = True
    return np.flatnonzero(chosen)
