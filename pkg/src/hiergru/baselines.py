"""Classical comparators behind the same train/forecast interface as the
recurrent family: autoregression, trailing-mean random walk, random forest,
stagewise boosted trees, and fully connected networks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import SeriesPanel, Window, make_windows, stack_windows
from .errors import (
    NodeSkippedWarning,
    NoTrainingDataError,
    ShapeMismatchError,
    WrongLengthError,
)
from .gru import OptimState, run_optimizer
from .hierarchy import Hierarchy, NodeId
from .models import forecast as _forecast

BASELINE_TAGS = ("ar", "rw", "rf", "gbt", "fc", "deepnn")


# ------------------------------------------------------------------ AR / RW

@dataclass(frozen=True)
class ArModel:
    """x_hat = a0 + sum_i a_i * x_{t-i}; coeffs[i] multiplies the i-th lag."""

    coeffs: np.ndarray

    @property
    def rho(self) -> int:
        return self.coeffs.shape[0] - 1

    def predict(self, window: np.ndarray) -> float:
        w = np.asarray(window, dtype=np.float64)
        if w.shape != (self.rho,):
            raise WrongLengthError(f"expected {self.rho} values, got shape {w.shape}")
        return float(self.coeffs[0] + self.coeffs[1:] @ w[::-1])


def fit_ar(windows: list[Window], rho: int) -> ArModel:
    """Least squares with intercept; slopes are the minimum-norm solution
    when the design is rank deficient, so a constant series yields a pure
    intercept that predicts the constant for any input."""
    if not windows:
        raise NoTrainingDataError("no training windows for AR fit")
    x, y = stack_windows(windows)
    lagged = x[:, ::-1]  # column i-1 holds lag i
    xm = lagged.mean(axis=0)
    ym = y.mean()
    slopes = _minimum_norm_solve(lagged - xm, y - ym, scale=np.abs(lagged).max())
    intercept = ym - xm @ slopes
    return ArModel(coeffs=np.concatenate([[intercept], slopes]))


def _minimum_norm_solve(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    """Minimum-norm least squares via SVD.

    Singular values are cut off relative to ``scale`` (the magnitude of the
    data the columns were derived from), so columns that are zero up to
    centering round-off are treated as exactly zero instead of being
    inverted into junk coefficients.
    """
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = np.finfo(np.float64).eps * max(a.shape) * max(scale, 1.0)
    inv = np.where(s > cutoff, np.divide(1.0, s, where=s > 0), 0.0)
    return vt.T @ (inv * (u.T @ b))


@dataclass(frozen=True)
class RwModel:
    """Trailing mean of the last rho observations."""

    rho: int

    def predict(self, window: np.ndarray) -> float:
        return predict_rw(window, self.rho)


def predict_rw(values, rho: int) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (rho,):
        raise WrongLengthError(f"expected exactly {rho} values, got shape {v.shape}")
    return float(v.mean())


# -------------------------------------------------------------------- trees

@dataclass(frozen=True)
class Tree:
    """Binary regression tree in flat-array form; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return float(self.value[i])

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict(row) for row in x])


@dataclass(frozen=True)
class TreeEnsemble:
    """Forest (mode "average") or boosted stages (mode "additive")."""

    trees: tuple[Tree, ...]
    mode: str
    shrinkage: float
    base_value: float
    rho: int

    def predict(self, window: np.ndarray) -> float:
        x = np.asarray(window, dtype=np.float64)
        if x.shape != (self.rho,):
            raise WrongLengthError(f"expected {self.rho} values, got shape {x.shape}")
        if self.mode == "average":
            return float(np.mean([t.predict(x) for t in self.trees]))
        return float(
            self.base_value + self.shrinkage * sum(t.predict(x) for t in self.trees)
        )


def _best_split(x: np.ndarray, y: np.ndarray, features, min_leaf: int):
    """Variance-reduction split: the (feature, threshold) pair minimizing the
    summed child SSE, first-best on ties."""
    n = y.shape[0]
    best = None
    best_score = np.inf
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        sizes = np.arange(1, n)
        valid = (sizes >= min_leaf) & (n - sizes >= min_leaf) & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        sse_l = csq[:-1] - csum[:-1] ** 2 / sizes
        sse_r = (csq[-1] - csq[:-1]) - (csum[-1] - csum[:-1]) ** 2 / (n - sizes)
        score = np.where(valid, sse_l + sse_r, np.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = score[i]
            best = (f, 0.5 * (xs[i - 1] + xs[i]))
    return best


def _grow_tree(x, y, *, max_depth, min_leaf, feature_count, rng) -> Tree:
    nodes: list[list] = []  # [feature, threshold, left, right, value]
    rho = x.shape[1]

    def grow(rows: np.ndarray, depth: int) -> int:
        idx = len(nodes)
        nodes.append([-1, 0.0, -1, -1, float(y[rows].mean())])
        if depth >= max_depth or rows.shape[0] < 2 * min_leaf:
            return idx
        if np.all(y[rows] == y[rows][0]):
            return idx
        if feature_count >= rho:
            features = range(rho)
        else:
            features = np.sort(rng.choice(rho, size=feature_count, replace=False))
        split = _best_split(x[rows], y[rows], features, min_leaf)
        if split is None:
            return idx
        f, thr = split
        mask = x[rows, f] <= thr
        nodes[idx][0] = int(f)
        nodes[idx][1] = float(thr)
        nodes[idx][2] = grow(rows[mask], depth + 1)
        nodes[idx][3] = grow(rows[~mask], depth + 1)
        return idx

    grow(np.arange(x.shape[0]), 0)
    cols = list(zip(*nodes))
    return Tree(
        feature=np.array(cols[0], dtype=np.int64),
        threshold=np.array(cols[1], dtype=np.float64),
        left=np.array(cols[2], dtype=np.int64),
        right=np.array(cols[3], dtype=np.int64),
        value=np.array(cols[4], dtype=np.float64),
    )


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 6
    min_leaf: int = 2
    feature_frac: float = 1.0 / 3.0
    seed: int = 0


def fit_forest(windows: list[Window], rho: int, cfg: ForestConfig) -> TreeEnsemble:
    """Bootstrap-resampled trees with per-split feature subsampling; the
    ensemble prediction is the plain mean of tree outputs."""
    if not windows:
        raise NoTrainingDataError("no training windows for forest fit")
    x, y = stack_windows(windows)
    rng = np.random.default_rng(cfg.seed)
    k = max(1, math.ceil(cfg.feature_frac * rho))
    trees = []
    for _ in range(cfg.n_trees):
        boot = rng.integers(0, x.shape[0], size=x.shape[0])
        trees.append(
            _grow_tree(
                x[boot], y[boot],
                max_depth=cfg.max_depth, min_leaf=cfg.min_leaf,
                feature_count=k, rng=rng,
            )
        )
    return TreeEnsemble(
        trees=tuple(trees), mode="average", shrinkage=1.0, base_value=0.0, rho=rho
    )


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    seed: int = 0
    subsample: float = 1.0


def fit_gbt(windows: list[Window], rho: int, cfg: GbtConfig) -> TreeEnsemble:
    """Stagewise least-squares boosting: the first stage is the global mean,
    then each tree fits the residual of everything before it."""
    if not windows:
        raise NoTrainingDataError("no training windows for boosting fit")
    x, y = stack_windows(windows)
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    base = float(y.mean())
    current = np.full(n, base)
    trees = []
    for _ in range(cfg.n_trees):
        residual = y - current
        if cfg.subsample < 1.0:
            m = max(1, int(cfg.subsample * n))
            rows = np.sort(rng.permutation(n)[:m])
        else:
            rows = np.arange(n)
        tree = _grow_tree(
            x[rows], residual[rows],
            max_depth=cfg.max_depth, min_leaf=1, feature_count=rho, rng=rng,
        )
        trees.append(tree)
        current = current + cfg.shrinkage * tree.predict_batch(x)
    return TreeEnsemble(
        trees=tuple(trees), mode="additive", shrinkage=cfg.shrinkage,
        base_value=base, rho=rho,
    )


# ---------------------------------------------------------------------- MLP

@dataclass(frozen=True)
class MlpModel:
    """Rectifier network with identity output; layer l maps sizes[l] to
    sizes[l+1]."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights) + (self.weights[-1].shape[1],)

    @property
    def rho(self) -> int:
        return self.weights[0].shape[0]

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if l < last:
                a = np.maximum(a, 0.0)
        return a[:, 0]

    def predict(self, window: np.ndarray) -> float:
        w = np.asarray(window, dtype=np.float64)
        if w.shape != (self.rho,):
            raise WrongLengthError(f"expected {self.rho} values, got shape {w.shape}")
        return float(self.predict_batch(w[None, :])[0])


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (100,)
    lr: float = 0.005
    epochs: int = 200
    seed: int = 0
    method: str = "adam"


# Ten rectifier layers of width 100, lr 0.005, 50 epochs.
DEEPNN_CONFIG = MlpConfig(hidden=(100,) * 10, lr=0.005, epochs=50)


def mlp_flatten(model: MlpModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def mlp_unflatten(vec: np.ndarray, sizes: tuple[int, ...]) -> MlpModel:
    weights, biases = [], []
    at = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(vec[at: at + a * b].reshape(a, b).copy())
        at += a * b
        biases.append(vec[at: at + b].copy())
        at += b
    if at != vec.shape[0]:
        raise ShapeMismatchError(
            f"flat vector of length {vec.shape[0]} does not match sizes {sizes}"
        )
    return MlpModel(weights=tuple(weights), biases=tuple(biases))


def mlp_loss_and_grad(
    model: MlpModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared error and its exact gradient via backpropagation."""
    n = x.shape[0]
    last = len(model.weights) - 1
    activations = [np.asarray(x, dtype=np.float64)]
    pre = []
    a = activations[0]
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if l < last else z
        activations.append(a)
    err = activations[-1][:, 0] - np.asarray(y, dtype=np.float64)
    loss = float(err @ err) / n

    dz = (2.0 / n) * err[:, None]
    grads = []
    for l in range(last, -1, -1):
        gw = activations[l].T @ dz
        gb = dz.sum(axis=0)
        grads.append((gw, gb))
        if l > 0:
            da = dz @ model.weights[l].T
            dz = da * (pre[l - 1] > 0.0)
    grads.reverse()
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, flat


def init_mlp(rho: int, hidden: tuple[int, ...], rng: np.random.Generator) -> MlpModel:
    """He-normal hidden layers; the output layer starts at zero so initial
    predictions are exactly zero."""
    sizes = (rho, *hidden, 1)
    weights, biases = [], []
    for l, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if l == len(sizes) - 2:
            weights.append(np.zeros((a, b)))
        else:
            weights.append(rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)))
        biases.append(np.zeros(b))
    return MlpModel(weights=tuple(weights), biases=tuple(biases))


def fit_mlp(windows: list[Window], rho: int, cfg: MlpConfig) -> MlpModel:
    """Full-batch first-order training on squared loss, seed-deterministic."""
    if not windows:
        raise NoTrainingDataError("no training windows for MLP fit")
    x, y = stack_windows(windows)
    model = init_mlp(rho, cfg.hidden, np.random.default_rng(cfg.seed))
    sizes = model.sizes

    def fn(vec):
        return mlp_loss_and_grad(mlp_unflatten(vec, sizes), x, y)

    opt = OptimState(lr=cfg.lr, method=cfg.method)
    final, _ = run_optimizer(fn, mlp_flatten(model), opt, cfg.epochs)
    return mlp_unflatten(final, sizes)


# ------------------------------------------------------------------ bundles

@dataclass(frozen=True)
class BaselineBundle:
    """Per-node fitted baseline models behind the recurrent bundles' API."""

    tag: str
    rho: int
    models: dict[NodeId, object]
    provenance: dict[NodeId, dict] = field(default_factory=dict)
    label: str | None = None

    @property
    def display_label(self) -> str:
        return self.label or self.tag

    @property
    def model_map(self) -> dict:
        return self.models

    def covered_nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(self.models))

    def predict_next(self, node: NodeId, window: np.ndarray) -> float:
        return self.models[node].predict(window)

    def forecast(
        self, panel: SeriesPanel, node: NodeId, origin: int, horizon: int
    ) -> np.ndarray:
        return _forecast(self, panel, node, origin, horizon)


def fit_baseline(
    panel: SeriesPanel,
    h: Hierarchy,
    tag: str,
    rho: int,
    cfg=None,
    *,
    label: str | None = None,
    jobs: int = 1,
) -> BaselineBundle:
    """Fit one baseline family on every node's training windows.

    Seeded configs are re-derived per node (stable hash of config seed and
    node id) so any single node's fit can be replayed in isolation.
    """
    from dataclasses import replace

    from .models import _pmap, node_seed

    if tag != "rw" and tag != "ar":
        cfg = cfg or {
            "rf": ForestConfig(),
            "gbt": GbtConfig(),
            "fc": MlpConfig(),
            "deepnn": DEEPNN_CONFIG,
        }.get(tag)
        if cfg is None:
            raise ValueError(f"unknown baseline tag {tag!r}")

    def fit(n):
        if tag == "rw":
            return n, RwModel(rho=rho), {"windows": None}
        windows = make_windows(panel, n, rho, "train")
        if not windows:
            warnings.warn(
                f"node {n!r} has no training windows; {tag} model unavailable",
                NodeSkippedWarning,
            )
            return n, None, {"windows": 0, "skipped": True}
        if tag == "ar":
            return n, fit_ar(windows, rho), {"windows": len(windows)}
        seeded = replace(cfg, seed=node_seed(cfg.seed, n))
        if tag == "rf":
            model = fit_forest(windows, rho, seeded)
        elif tag == "gbt":
            model = fit_gbt(windows, rho, seeded)
        else:
            model = fit_mlp(windows, rho, seeded)
        return n, model, {"windows": len(windows), "seed": seeded.seed}

    results = _pmap(fit, list(h.bfs_order()), jobs)
    return BaselineBundle(
        tag=tag,
        rho=rho,
        models={n: m for n, m, _ in results if m is not None},
        provenance={n: prov for n, _, prov in results},
        label=label,
    )
