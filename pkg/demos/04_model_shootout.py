#!/usr/bin/env python3
"""Every model family on one synthetic panel.

Trains the classical baselines and the recurrent family on a noisy
three-level hierarchy, evaluates them rolling-origin over the test
segment, and prints the aggregate table.  Cells are RMSE relative to a
per-node AR(1) reference (1.000 means "as good as AR(1)", lower is
better), plus mean per-node Pearson and distance correlations.
"""

import warnings

from hiergru import (
    ForestConfig,
    GbtConfig,
    MlpConfig,
    SynthSpec,
    TrainSpec,
    evaluate,
    fit_baseline,
    render_report,
    synth_panel,
    train_bihrnn,
    train_hrnn,
    train_igru,
    train_knn_gru,
    train_sgru,
)

warnings.filterwarnings("ignore")

h, panel = synth_panel(
    SynthSpec(depth=2, branching=3, length=100, leaf_noise_sd=0.75, seed=7)
)
spec = TrainSpec(rho=4, hidden=8, epochs=150, lr=0.005, seed=0,
                 alpha=1.5, lambda1=1.0, lambda2=1.0, k_neighbors=3)

print("fitting baselines ...")
bundles = [
    fit_baseline(panel, h, "ar", rho=1, label="ar_1"),
    fit_baseline(panel, h, "ar", rho=4, label="ar_4"),
    fit_baseline(panel, h, "rw", rho=4, label="rw_4"),
    fit_baseline(panel, h, "rf", rho=4, cfg=ForestConfig(n_trees=50), label="rf_4"),
    fit_baseline(panel, h, "gbt", rho=4, cfg=GbtConfig(n_trees=50), label="gbt_4"),
    fit_baseline(panel, h, "fc", rho=4, cfg=MlpConfig(epochs=100), label="fc_4"),
]

print("fitting the recurrent family ...")
bundles.append(train_sgru(panel, h, spec))
igru = train_igru(panel, h, spec)
bundles.append(igru)
bundles.append(train_knn_gru(panel, h, spec))
hrnn = train_hrnn(panel, h, spec)
bundles.append(hrnn)
bundles.append(train_bihrnn(panel, h, spec, hrnn))

report = evaluate(bundles, panel, h, horizons=(0, 1, 2, 4))
print()
print(render_report(report, "markdown"))
print("Anchored variants typically improve on independent units at the")
print("noisy leaf levels; see report rows for hrnn/bihrnn vs igru.")
