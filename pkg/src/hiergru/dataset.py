"""Series ingestion, log-change transform, chronological split, windowing.

A :class:`SeriesPanel` holds one rate series per node, aligned on a shared
calendar of period labels.  Everything downstream (correlations, training
windows, evaluation origins) indexes into these per-node arrays.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptySeriesError,
    InvalidSpecError,
    NonPositiveLevelError,
    SeriesGapError,
)
from .hierarchy import Hierarchy, NodeId, build_hierarchy

DEFAULT_TRAIN_FRACTION = 0.75


@dataclass(frozen=True)
class Window:
    """Supervised example: the ``rho`` rates preceding the target, in time order.

    ``inputs`` has shape (rho,) for scalar models and (rho, k+1) for
    neighbor-augmented ones.
    """

    inputs: np.ndarray
    target: float


@dataclass(frozen=True)
class SeriesPanel:
    """Per-node rate series on a shared calendar, with train/test boundary.

    ``periods[n]`` holds strictly increasing calendar positions,
    ``rates[n]`` the matching log-change rates, and ``split_index[n]`` the
    first test position of node ``n``.
    """

    calendar: tuple[str, ...]
    periods: dict[NodeId, np.ndarray]
    rates: dict[NodeId, np.ndarray]
    split_index: dict[NodeId, int]

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(self.rates))

    def length(self, n: NodeId) -> int:
        return int(self.rates[n].shape[0])

    def train_rates(self, n: NodeId) -> np.ndarray:
        return self.rates[n][: self.split_index[n]]

    def test_positions(self, n: NodeId) -> range:
        return range(self.split_index[n], self.length(n))

    def period_label(self, n: NodeId, position: int) -> str:
        return self.calendar[int(self.periods[n][position])]


def to_rates(levels, *, log_base: float = math.e) -> np.ndarray:
    """Convert raw index levels to percent log-change rates.

    rate(t) = 100 * log(x_t / x_{t-1}), natural log by default; pass
    ``log_base`` to audit against another convention.
    """
    x = np.asarray(levels, dtype=np.float64)
    if x.size < 2:
        raise EmptySeriesError(f"need at least 2 levels, got {x.size}")
    bad = np.flatnonzero(~(x > 0.0))
    if bad.size:
        raise NonPositiveLevelError(
            f"non-positive level at position(s) {', '.join(map(str, bad))}"
        )
    rates = 100.0 * np.log(x[1:] / x[:-1])
    if log_base != math.e:
        rates = rates / math.log(log_base)
    return rates


def split_point(length: int, train_fraction: float) -> int:
    return math.ceil(train_fraction * length)


def chronological_split(panel: SeriesPanel, train_fraction: float) -> SeriesPanel:
    """Recompute every node's train/test boundary; earliest data trains.

    ``split_index(n) = ceil(train_fraction * length(n))``, no shuffling.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSpecError(f"train_fraction must be in (0, 1), got {train_fraction}")
    split = {}
    for n, r in panel.rates.items():
        if r.shape[0] < 2:
            raise EmptySeriesError(
                f"node {n!r}: series of length {r.shape[0]} cannot be split"
            )
        split[n] = split_point(r.shape[0], train_fraction)
    return replace(panel, split_index=split)


def build_panel(
    calendar,
    rate_series: dict[NodeId, tuple[int, np.ndarray]],
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> SeriesPanel:
    """Assemble a panel from per-node (first_period, rates) pairs."""
    periods = {}
    rates = {}
    for n, (start, r) in rate_series.items():
        r = np.asarray(r, dtype=np.float64)
        if not np.all(np.isfinite(r)):
            raise InvalidSpecError(f"node {n!r}: non-finite rate values")
        periods[n] = np.arange(start, start + r.shape[0], dtype=np.int64)
        rates[n] = r
    panel = SeriesPanel(
        calendar=tuple(calendar),
        periods=periods,
        rates=rates,
        split_index={n: 0 for n in rates},
    )
    return chronological_split(panel, train_fraction)


def make_windows(
    panel: SeriesPanel, n: NodeId, rho: int, segment: str
) -> list[Window]:
    """Supervised windows for one node and segment ("train" or "test").

    Train windows never use a test-segment target; test windows may reach
    back into the train segment for their inputs.  Returns an empty list
    when the series is too short.
    """
    if rho < 1:
        raise InvalidSpecError(f"rho must be >= 1, got {rho}")
    if segment not in ("train", "test"):
        raise InvalidSpecError(f"segment must be 'train' or 'test', got {segment!r}")
    r = panel.rates[n]
    split = panel.split_index[n]
    if segment == "train":
        targets = range(rho, split)
    else:
        targets = range(max(rho, split), r.shape[0])
    return [Window(inputs=r[t - rho: t].copy(), target=float(r[t])) for t in targets]


def stack_windows(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a window list into (inputs, targets) arrays for batch training."""
    if not windows:
        raise EmptySeriesError("no windows to stack")
    inputs = np.stack([w.inputs for w in windows])
    targets = np.array([w.target for w in windows], dtype=np.float64)
    return inputs, targets


# ----------------------------------------------------------------- loading

def load_series_csv(
    path,
    *,
    already_rates: bool = False,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    log_base: float = math.e,
) -> SeriesPanel:
    """Load ``series.csv`` (header ``node_id,period,value``) into a panel.

    Values are raw index levels converted to rates internally unless
    ``already_rates`` is set.  Periods sort lexicographically (ISO labels),
    and each node must cover a contiguous run of the shared calendar.
    """
    per_node: dict[str, dict[str, float]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"node_id", "period", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidSpecError(
                f"{path}: expected header columns node_id,period,value"
            )
        for rec in reader:
            node = rec["node_id"].strip()
            period = rec["period"].strip()
            if period in per_node[node]:
                raise InvalidSpecError(
                    f"duplicate observation for node {node!r} period {period}"
                )
            per_node[node][period] = float(rec["value"])
    if not per_node:
        raise EmptySeriesError(f"{path}: no observations")

    calendar = sorted({p for obs in per_node.values() for p in obs})
    pos = {p: i for i, p in enumerate(calendar)}

    rate_series: dict[str, tuple[int, np.ndarray]] = {}
    for node, obs in per_node.items():
        labels = sorted(obs)
        positions = [pos[p] for p in labels]
        first, last = positions[0], positions[-1]
        if last - first + 1 != len(positions):
            covered = set(positions)
            gaps = [calendar[i] for i in range(first, last + 1) if i not in covered]
            raise SeriesGapError(
                f"node {node!r}: missing interior period(s) {', '.join(gaps)}"
            )
        values = np.array([obs[p] for p in labels], dtype=np.float64)
        if already_rates:
            if not np.all(np.isfinite(values)):
                raise InvalidSpecError(f"node {node!r}: non-finite rate values")
            rate_series[node] = (first, values)
        else:
            bad = np.flatnonzero(~(values > 0.0))
            if bad.size:
                raise NonPositiveLevelError(
                    f"node {node!r}: non-positive level at period(s) "
                    f"{', '.join(labels[i] for i in bad)}"
                )
            rate_series[node] = (first + 1, to_rates(values, log_base=log_base))
    return build_panel(calendar, rate_series, train_fraction)


def save_series_csv(panel: SeriesPanel, path) -> None:
    """Write a panel's rates back to the ``series.csv`` format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "period", "value"])
        for n in panel.nodes:
            for pos, rate in zip(panel.periods[n], panel.rates[n]):
                writer.writerow([n, panel.calendar[int(pos)], repr(float(rate))])


# --------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class SynthSpec:
    """Synthetic hierarchical panel: AR(1) root, noisy copies below.

    Every node at level L equals its parent's series plus independent
    Gaussian noise with standard deviation ``leaf_noise_sd * L``, so the
    signal-to-noise ratio decays down the tree the way disaggregated index
    components do.
    """

    depth: int
    branching: int
    length: int
    leaf_noise_sd: float
    seed: int
    ar_coeff: float = 0.6
    innovation_sd: float = 1.0
    train_fraction: float = DEFAULT_TRAIN_FRACTION

    def __post_init__(self):
        if self.depth < 1 or self.branching < 1 or self.length < 10:
            raise InvalidSpecError(
                "need depth >= 1, branching >= 1, length >= 10; got "
                f"depth={self.depth}, branching={self.branching}, length={self.length}"
            )
        if not 0.0 < abs(self.ar_coeff) < 1.0:
            raise InvalidSpecError("ar_coeff must be in (0, 1) for stationarity")


def _month_labels(length: int) -> list[str]:
    return [f"{2000 + i // 12:04d}-{i % 12 + 1:02d}" for i in range(length)]


def synth_panel(spec: SynthSpec) -> tuple[Hierarchy, SeriesPanel]:
    """Generate a deterministic synthetic hierarchy and rate panel."""
    rng = np.random.default_rng(spec.seed)
    phi, sd = spec.ar_coeff, spec.innovation_sd

    root_id = "root"
    series: dict[str, np.ndarray] = {}
    x = np.empty(spec.length)
    x[0] = rng.normal(0.0, sd / math.sqrt(1.0 - phi * phi))
    innov = rng.normal(0.0, sd, size=spec.length - 1)
    for t in range(1, spec.length):
        x[t] = phi * x[t - 1] + innov[t - 1]
    series[root_id] = x

    rows: list[tuple[str, str | None, float | None]] = [(root_id, None, 1.0)]
    frontier = [root_id]
    for level in range(1, spec.depth + 1):
        noise_sd = spec.leaf_noise_sd * level
        next_frontier = []
        for parent in frontier:
            for i in range(spec.branching):
                child = f"{parent}.{i}"
                series[child] = series[parent] + rng.normal(
                    0.0, noise_sd, size=spec.length
                )
                rows.append((child, parent, 1.0))
                next_frontier.append(child)
        frontier = next_frontier

    h = build_hierarchy(rows)
    calendar = _month_labels(spec.length)
    panel = build_panel(
        calendar,
        {n: (0, s) for n, s in series.items()},
        spec.train_fraction,
    )
    return h, panel
