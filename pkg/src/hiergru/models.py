"""Recurrent model family: one GRU per node (or shared), trained with
optional quadratic anchoring toward related nodes' parameters.

Five trainers share the same machinery and differ only in what anchors
which node:

* ``train_sgru``     one unit fit on the pooled windows of every node
* ``train_igru``     independent units, no anchoring
* ``train_knn_gru``  independent units over (node + k correlated nodes) inputs
* ``train_hrnn``     top-down pass; each node anchored to its already-trained
                     parent with coefficient tau/2, tau = exp(alpha + C)
* ``train_bihrnn``   per-node pass anchored to frozen pretrained parent and
                     weighted children parameters (coefficients lambda1 and
                     lambda2 * child share)

Every trainer is a pure function of (panel, hierarchy, spec[, pretrained]):
node seeds derive from a stable hash, batches are full and ordered, so
repeated runs are bit-identical.
"""

from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import SeriesPanel, make_windows, stack_windows
from .errors import (
    HiergruError,
    InsufficientHistoryError,
    InsufficientNeighborsWarning,
    InvalidSpecError,
    MissingPretrainedError,
    NodeSkippedWarning,
    NoTrainingDataError,
)
from .gru import (
    GruParams,
    OptimState,
    init_params,
    optimize,
    predict_sequence,
    zero_params,
)
from .hierarchy import (
    Hierarchy,
    NodeId,
    aligned_train_rates,
    child_weights,
    precision_schedule,
)

RNN_TAGS = ("sgru", "igru", "knngru", "hrnn", "bihrnn")


@dataclass(frozen=True)
class TrainSpec:
    """All training knobs shared by the recurrent family."""

    rho: int = 4
    hidden: int = 8
    lr: float = 0.005
    epochs: int = 200
    alpha: float = 1.5
    lambda1: float = 1.0
    lambda2: float = 1.0
    k_neighbors: int = 5
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("rho", "hidden", "epochs", "k_neighbors", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise InvalidSpecError(f"{name} must be an integer, got {v!r}")
        if self.rho < 1 or self.hidden < 1 or self.epochs < 0:
            raise InvalidSpecError(
                f"need rho >= 1, hidden >= 1, epochs >= 0; got "
                f"rho={self.rho}, hidden={self.hidden}, epochs={self.epochs}"
            )
        if self.lr <= 0:
            raise InvalidSpecError(f"learning rate must be positive, got {self.lr}")
        if self.k_neighbors < 1:
            raise InvalidSpecError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidSpecError("lambda coefficients must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidSpecError(f"unknown optimizer {self.optimizer!r}")


def node_seed(seed: int, node: NodeId) -> int:
    """Stable per-node RNG seed, identical across runs and platforms."""
    digest = hashlib.sha256(f"{seed}|{node}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ModelBundle:
    """Per-node trained parameters plus training provenance."""

    tag: str
    spec: TrainSpec
    params: dict[NodeId, GruParams]
    provenance: dict[NodeId, dict]
    neighbors: dict[NodeId, tuple[NodeId, ...]] | None = None
    label: str | None = None

    @property
    def display_label(self) -> str:
        return self.label or self.tag

    @property
    def rho(self) -> int:
        return self.spec.rho

    @property
    def model_map(self) -> dict:
        return self.params

    def covered_nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(self.params))

    def predict_next(self, node: NodeId, window: np.ndarray) -> float:
        return predict_sequence(self.params[node], window)

    def forecast(
        self, panel: SeriesPanel, node: NodeId, origin: int, horizon: int
    ) -> np.ndarray:
        return forecast(self, panel, node, origin, horizon)


# ----------------------------------------------------------------- training

def _pmap(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _train_unit(init, inputs, targets, spec, regularizers=()):
    """Optimize one unit; returns (params, losses)."""
    opt = OptimState(lr=spec.lr, method=spec.optimizer)
    return optimize(
        init, inputs, targets, opt,
        epochs=spec.epochs, regularizers=regularizers,
    )


def _node_provenance(order, seed, losses, **extra):
    prov = {
        "train_order": order,
        "seed": seed,
        "skipped": False,
        "initial_loss": losses[0] if losses else None,
        "final_loss": losses[-1] if losses else None,
    }
    prov.update(extra)
    return prov


def _skip(node, order, seed, init):
    warnings.warn(
        f"node {node!r} has no training windows; keeping initial parameters",
        NodeSkippedWarning,
    )
    return init, {
        "train_order": order,
        "seed": seed,
        "skipped": True,
        "initial_loss": None,
        "final_loss": None,
    }


def train_sgru(panel: SeriesPanel, h: Hierarchy, spec: TrainSpec) -> ModelBundle:
    """One shared unit fit on the pooled train windows of every node."""
    windows = []
    for n in sorted(h.nodes):
        windows.extend(make_windows(panel, n, spec.rho, "train"))
    if not windows:
        raise NoTrainingDataError("no node provides a training window")
    inputs, targets = stack_windows(windows)
    seed = node_seed(spec.seed, h.root)
    init = init_params(spec.hidden, np.random.default_rng(seed))
    params, losses = _train_unit(init, inputs, targets, spec)
    prov = _node_provenance(0, seed, losses, pooled_windows=len(windows))
    return ModelBundle(
        tag="sgru",
        spec=spec,
        params={n: params for n in h.nodes},
        provenance={n: prov for n in h.nodes},
    )


def train_igru(
    panel: SeriesPanel, h: Hierarchy, spec: TrainSpec, *, jobs: int = 1
) -> ModelBundle:
    """Independent per-node units with zero regularization."""
    order = h.bfs_order()

    def fit(item):
        rank, n = item
        seed = node_seed(spec.seed, n)
        init = init_params(spec.hidden, np.random.default_rng(seed))
        windows = make_windows(panel, n, spec.rho, "train")
        if not windows:
            return n, *_skip(n, rank, seed, init)
        inputs, targets = stack_windows(windows)
        params, losses = _train_unit(init, inputs, targets, spec)
        return n, params, _node_provenance(rank, seed, losses)

    results = _pmap(fit, list(enumerate(order)), jobs)
    return ModelBundle(
        tag="igru",
        spec=spec,
        params={n: p for n, p, _ in results},
        provenance={n: prov for n, _, prov in results},
    )


def train_hrnn(
    panel: SeriesPanel,
    h: Hierarchy,
    spec: TrainSpec,
    *,
    prior_scale: float = 1.0,
    jobs: int = 1,
) -> ModelBundle:
    """Top-down pass with each node anchored to its trained parent.

    The root trains against a zero anchor with coefficient 1/2 (a unit
    Gaussian prior); every other node against its parent's final
    parameters with coefficient tau/2 where tau = exp(alpha + C) and C is
    the training-window parent correlation.  ``prior_scale=0`` removes all
    anchoring and reproduces independent training bit for bit.
    """
    sched = precision_schedule(panel, h, spec.alpha, fallback=True)
    params: dict[NodeId, GruParams] = {}
    provenance: dict[NodeId, dict] = {}
    zero_anchor = zero_params(spec.hidden)

    levels: dict[int, list[NodeId]] = {}
    for n in h.bfs_order():
        levels.setdefault(h.level[n], []).append(n)

    counter = 0
    for level in sorted(levels):
        def fit(item):
            rank, n = item
            seed = node_seed(spec.seed, n)
            init = init_params(spec.hidden, np.random.default_rng(seed))
            if n == h.root:
                coeff = 0.5 * prior_scale
                anchor = zero_anchor
                tau = corr = None
            else:
                tau = sched.tau[n]
                corr = sched.correlation[n]
                coeff = 0.5 * tau * prior_scale
                anchor = params[h.parent[n]]
            regs = ((anchor, coeff),) if coeff != 0.0 else ()
            windows = make_windows(panel, n, spec.rho, "train")
            if not windows:
                trained, prov = _skip(n, rank, seed, init)
            else:
                inputs, targets = stack_windows(windows)
                trained, losses = _train_unit(init, inputs, targets, spec, regs)
                prov = _node_provenance(rank, seed, losses)
            prov.update({"tau": tau, "correlation": corr, "anchor_coeff": coeff})
            return n, trained, prov

        items = [(counter + i, n) for i, n in enumerate(levels[level])]
        counter += len(items)
        for n, trained, prov in _pmap(fit, items, jobs):
            params[n] = trained
            provenance[n] = prov

    return ModelBundle(tag="hrnn", spec=spec, params=params, provenance=provenance)


def train_bihrnn(
    panel: SeriesPanel,
    h: Hierarchy,
    spec: TrainSpec,
    pretrained: ModelBundle,
    *,
    jobs: int = 1,
) -> ModelBundle:
    """Refit every node against frozen pretrained parent and child anchors.

    Starting from its own pretrained parameters, node n minimizes

        MSE + lambda1 ||theta - theta_parent||^2
            + lambda2 * sum_i w_i ||theta - theta_child_i||^2

    where all anchor parameters come from ``pretrained`` and stay fixed, and
    w_i are the children's normalized basket weights.  The root has no
    parent term, leaves no child term.  With ``epochs=0`` the output equals
    the pretrained bundle bit for bit.
    """
    missing = [n for n in h.nodes if n not in pretrained.params]
    if missing:
        raise MissingPretrainedError(
            f"pretrained bundle lacks node(s): {', '.join(sorted(missing))}"
        )

    order = h.bfs_order()

    def fit(item):
        rank, n = item
        regs = []
        if n in h.parent and spec.lambda1 != 0.0:
            regs.append((pretrained.params[h.parent[n]], spec.lambda1))
        kids = h.children.get(n, ())
        if kids and spec.lambda2 != 0.0:
            shares = child_weights(h, n)
            for c in kids:
                coeff = spec.lambda2 * shares[c]
                if coeff != 0.0:
                    regs.append((pretrained.params[c], coeff))
        init = pretrained.params[n]
        seed = node_seed(spec.seed, n)
        windows = make_windows(panel, n, spec.rho, "train")
        if spec.epochs == 0 or not windows:
            if not windows:
                warnings.warn(
                    f"node {n!r} has no training windows; keeping pretrained "
                    "parameters",
                    NodeSkippedWarning,
                )
            prov = _node_provenance(rank, seed, [], anchors=len(regs))
            prov["skipped"] = not windows
            return n, init, prov
        inputs, targets = stack_windows(windows)
        trained, losses = _train_unit(init, inputs, targets, spec, tuple(regs))
        return n, trained, _node_provenance(rank, seed, losses, anchors=len(regs))

    results = _pmap(fit, list(enumerate(order)), jobs)
    return ModelBundle(
        tag="bihrnn",
        spec=spec,
        params={n: p for n, p, _ in results},
        provenance={n: prov for n, _, prov in results},
    )


# ------------------------------------------------------- neighbor-augmented

def _pairwise_train_correlation(panel, a: NodeId, b: NodeId) -> float | None:
    mat = aligned_train_rates(panel, [a, b])
    if mat.shape[0] < 3:
        return None
    x = mat[:, 0] - mat[:, 0].mean()
    y = mat[:, 1] - mat[:, 1].mean()
    sxx = float(x @ x)
    syy = float(y @ y)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float(x @ y) / np.sqrt(sxx * syy)


def select_neighbors(
    panel: SeriesPanel, h: Hierarchy, n: NodeId, k: int
) -> tuple[NodeId, ...]:
    """The k nodes most correlated with n on the training window.

    Ties break toward the lexicographically smaller node id; nodes without
    a computable correlation are not candidates.  When fewer than k
    candidates exist, all of them are used and a warning is emitted.
    """
    scored = []
    for other in sorted(h.nodes):
        if other == n:
            continue
        c = _pairwise_train_correlation(panel, n, other)
        if c is not None:
            scored.append((-c, other))
    scored.sort()
    chosen = tuple(node for _, node in scored[:k])
    if len(chosen) < k:
        warnings.warn(
            f"node {n!r}: only {len(chosen)} usable neighbors of {k} requested",
            InsufficientNeighborsWarning,
        )
    return chosen


def _train_value_grid(panel: SeriesPanel) -> dict[NodeId, np.ndarray]:
    """Per node: calendar-length array of train-segment rates, NaN elsewhere."""
    grid = {}
    size = len(panel.calendar)
    for n in panel.rates:
        g = np.full(size, np.nan)
        split = panel.split_index[n]
        g[panel.periods[n][:split]] = panel.rates[n][:split]
        grid[n] = g
    return grid


def _stacked_windows(panel, n, channels, grid, rho):
    """Multichannel train windows for node n; rows are time steps, column 0
    is the node itself.  Windows touching any missing value are dropped."""
    split = panel.split_index[n]
    periods = panel.periods[n]
    rates = panel.rates[n]
    inputs, targets = [], []
    for t in range(rho, split):
        span = periods[t - rho: t]
        mat = np.column_stack([grid[c][span] for c in channels])
        if np.all(np.isfinite(mat)):
            inputs.append(mat)
            targets.append(rates[t])
    if not inputs:
        return None
    return np.stack(inputs), np.array(targets, dtype=np.float64)


def train_knn_gru(
    panel: SeriesPanel, h: Hierarchy, spec: TrainSpec, *, jobs: int = 1
) -> ModelBundle:
    """Per-node units whose step input stacks the node with its k most
    Pearson-correlated nodes (correlations measured on training windows)."""
    grid = _train_value_grid(panel)
    order = h.bfs_order()
    neighbor_map = {n: select_neighbors(panel, h, n, spec.k_neighbors) for n in order}

    def fit(item):
        rank, n = item
        nbs = neighbor_map[n]
        channels = (n, *nbs)
        seed = node_seed(spec.seed, n)
        init = init_params(
            spec.hidden, np.random.default_rng(seed), input_dim=len(channels)
        )
        stacked = _stacked_windows(panel, n, channels, grid, spec.rho)
        if stacked is None:
            return n, *_skip(n, rank, seed, init)
        inputs, targets = stacked
        params, losses = _train_unit(init, inputs, targets, spec)
        return n, params, _node_provenance(rank, seed, losses, neighbors=list(nbs))

    results = _pmap(fit, list(enumerate(order)), jobs)
    return ModelBundle(
        tag="knngru",
        spec=spec,
        params={n: p for n, p, _ in results},
        provenance={n: prov for n, _, prov in results},
        neighbors=neighbor_map,
    )


# --------------------------------------------------------------- forecasting

def roll_window(window: np.ndarray, prediction: float) -> np.ndarray:
    """Advance a forecast window one step: drop the oldest row, append the
    prediction.  Extra channels of multichannel windows persist their last
    observed value."""
    if window.ndim == 1:
        return np.append(window[1:], prediction)
    new_row = window[-1].copy()
    new_row[0] = prediction
    return np.vstack([window[1:], new_row])


def recursive_forecast(predict, window: np.ndarray, horizon: int) -> np.ndarray:
    """Iterate one-step forecasts forward; position 0 is the one-step-ahead
    prediction, position j feeds the previous j predictions back in."""
    preds = np.empty(horizon + 1)
    for j in range(horizon + 1):
        preds[j] = predict(window)
        if j < horizon:
            window = roll_window(window, preds[j])
    return preds


def _channel_value(panel: SeriesPanel, node: NodeId, period: int) -> float:
    """Rate of ``node`` at a calendar period, carrying the last earlier
    observation backward when the period is not covered."""
    periods = panel.periods[node]
    pos = int(np.searchsorted(periods, period))
    if pos < len(periods) and periods[pos] == period:
        return float(panel.rates[node][pos])
    if pos > 0:
        return float(panel.rates[node][pos - 1])
    return 0.0


def initial_window(
    bundle, panel: SeriesPanel, node: NodeId, origin: int
) -> np.ndarray:
    """The window of the ``rho`` observations preceding ``origin``."""
    rho = bundle.rho
    if origin - rho < 0:
        raise InsufficientHistoryError(
            f"node {node!r}: origin {origin} needs {rho} earlier observations"
        )
    if origin > panel.length(node):
        raise InsufficientHistoryError(
            f"node {node!r}: origin {origin} beyond series length "
            f"{panel.length(node)}"
        )
    neighbors = getattr(bundle, "neighbors", None)
    if neighbors is None:
        return panel.rates[node][origin - rho: origin].copy()
    channels = (node, *neighbors[node])
    span = panel.periods[node][origin - rho: origin]
    rows = [
        [_channel_value(panel, c, int(p)) for c in channels] for p in span
    ]
    return np.array(rows, dtype=np.float64)


def forecast(
    bundle, panel: SeriesPanel, node: NodeId, origin: int, horizon: int
) -> np.ndarray:
    """Recursive multi-horizon forecast; returns ``horizon + 1`` values."""
    if horizon < 0:
        raise InvalidSpecError(f"horizon must be >= 0, got {horizon}")
    if node not in bundle.model_map:
        raise HiergruError(f"bundle {bundle.tag!r} has no model for {node!r}")
    window = initial_window(bundle, panel, node, origin)
    return recursive_forecast(
        lambda w: bundle.predict_next(node, w), window, horizon
    )
