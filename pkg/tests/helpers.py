"""Shared test utilities: independent oracles coded from definitions.

Everything here deliberately avoids the package's own computation paths so
that tests compare two independent routes to the same quantity.
"""

import math

import numpy as np


def fd_grad(loss_fn, x0, step=1e-5):
    """Central finite differences, one coordinate at a time."""
    x = np.array(x0, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        hi = loss_fn(x)
        x[i] = orig - step
        lo = loss_fn(x)
        x[i] = orig
        g[i] = (hi - lo) / (2.0 * step)
    return g


def rel_err(analytic, reference):
    """Norm-relative disagreement between two gradient vectors."""
    analytic = np.asarray(analytic)
    reference = np.asarray(reference)
    denom = max(np.linalg.norm(reference), 1e-12)
    return np.linalg.norm(analytic - reference) / denom


def pearson_oracle(x, y):
    """Pearson correlation from the raw sum formulas, explicit loops."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    sxx = sum((x[i] - mx) ** 2 for i in range(n))
    syy = sum((y[i] - my) ** 2 for i in range(n))
    return sxy / math.sqrt(sxx * syy)


def rmse_oracle(a, p):
    n = len(a)
    return math.sqrt(sum((a[i] - p[i]) ** 2 for i in range(n)) / n)


def dcorr_oracle(x, y):
    """Distance correlation straight from the double-centering definition."""
    n = len(x)

    def centered(v):
        d = [[abs(v[i] - v[j]) for j in range(n)] for i in range(n)]
        row = [sum(d[i]) / n for i in range(n)]
        col = [sum(d[i][j] for i in range(n)) / n for j in range(n)]
        grand = sum(row) / n
        return [
            [d[i][j] - row[i] - col[j] + grand for j in range(n)]
            for i in range(n)
        ]

    cx = centered(x)
    cy = centered(y)
    vxy = sum(cx[i][j] * cy[i][j] for i in range(n) for j in range(n)) / (n * n)
    vxx = sum(cx[i][j] ** 2 for i in range(n) for j in range(n)) / (n * n)
    vyy = sum(cy[i][j] ** 2 for i in range(n) for j in range(n)) / (n * n)
    return math.sqrt(max(0.0, vxy) / math.sqrt(vxx * vyy))


def gru_forward_oracle(params, inputs):
    """Step-by-step re-evaluation of the recurrence with plain loops."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[0] == 1 and np.asarray(inputs).ndim == 1:
        x = np.asarray(inputs, dtype=float)[:, None]
    h = params.hidden

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    s = np.zeros(h)
    for t in range(x.shape[0]):
        xt = x[t]
        z = sig(xt @ params.u_z + s @ params.w_z + params.b_z)
        r = sig(xt @ params.u_r + s @ params.w_r + params.b_r)
        v = np.tanh(xt @ params.u_v + (s * r) @ params.w_v + params.b_v)
        s = z * v + (1.0 - z) * s
    return float(s @ params.readout_w + params.readout_b)
