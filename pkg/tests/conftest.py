import numpy as np
import pytest

from hiergru.dataset import SynthSpec, build_panel, synth_panel
from hiergru.hierarchy import build_hierarchy


@pytest.fixture
def three_node_tree():
    return build_hierarchy([("A", None, 1.0), ("B", "A", 0.6), ("C", "A", 0.4)])


@pytest.fixture
def small_synth():
    """Deterministic 13-node panel (depth 2, branching 3, length 120)."""
    return synth_panel(
        SynthSpec(depth=2, branching=3, length=120, leaf_noise_sd=0.5, seed=7)
    )


def panel_from_rates(series, train_fraction=0.75):
    """Panel directly from {node: rate array}, all starting at period 0."""
    length = max(len(v) for v in series.values())
    calendar = [f"p{i:04d}" for i in range(length)]
    return build_panel(
        calendar,
        {n: (0, np.asarray(v, dtype=float)) for n, v in series.items()},
        train_fraction,
    )
