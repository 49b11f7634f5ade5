#!/usr/bin/env python3
"""From raw index levels to supervised windows.

Walks the data path every model consumes: convert index levels to percent
log-change rates, split each series chronologically (earliest 75% trains),
and slice the rate series into lookback windows.
"""

import numpy as np

from hiergru import make_windows, to_rates
from hiergru.dataset import build_panel

# A fictional price index drifting upward with some noise.
rng = np.random.default_rng(0)
levels = 100.0 * np.exp(np.cumsum(rng.normal(0.002, 0.004, size=48)))
print("first levels:", np.round(levels[:5], 2))

rates = to_rates(levels)
print("first rates (100 * log month-over-month ratio):", np.round(rates[:4], 3))

# The transform is lossless: exponentiating the cumulative rates recovers
# the original levels.
rebuilt = levels[0] * np.exp(np.cumsum(rates) / 100.0)
print("max reconstruction error:", np.max(np.abs(rebuilt - levels[1:])))

# Build a one-node panel; the split lands at ceil(0.75 * len).
calendar = [f"{2020 + i // 12}-{i % 12 + 1:02d}" for i in range(len(rates))]
panel = build_panel(calendar, {"headline": (0, rates)})
split = panel.split_index["headline"]
print(f"\n{panel.length('headline')} rate observations, train/test split at {split}")

train = make_windows(panel, "headline", rho=4, segment="train")
test = make_windows(panel, "headline", rho=4, segment="test")
print(f"rho=4 gives {len(train)} train windows and {len(test)} test windows")
print("first train window:", np.round(train[0].inputs, 3), "->", round(train[0].target, 3))

# Test windows may reach back into the train segment for inputs, but no
# train window ever has a target inside the test segment.
print("first test window: ", np.round(test[0].inputs, 3), "->", round(test[0].target, 3))
