"""Independent reference implementations used as test oracles."""

import math
from collections import Counter

import numpy as np

NODATA = 255


def naive_tally(pre, post, mask, n_classes=9):
    """Per-pixel double loop over the grids."""
    counts = [[0] * n_classes for _ in range(n_classes)]
    h, w = len(pre), len(pre[0])
    for y in range(h):
        for x in range(w):
            a, b = int(pre[y][x]), int(post[y][x])
            if mask[y][x] and a != NODATA and b != NODATA:
                counts[a][b] += 1
    return np.array(counts, dtype=np.int64)


def naive_composite_pixel(series):
    """series: list of (date, class). Mode of valid classes, latest date wins ties."""
    valid = [(d, c) for d, c in series if c != NODATA]
    if not valid:
        return NODATA
    freq = Counter(c for _, c in valid)
    top = max(freq.values())
    latest = {}
    for d, c in valid:
        if freq[c] == top:
            latest[c] = max(latest.get(c, d), d)
    return max(latest, key=lambda c: latest[c])


def hand_f1(true, pred, labels):
    """Macro-F1 from explicit per-class counting, over classes present in ``true``."""
    scores = []
    for c in labels:
        if c not in true:
            continue
        tp = sum(t == c and p == c for t, p in zip(true, pred))
        fp = sum(t != c and p == c for t, p in zip(true, pred))
        fn = sum(t == c and p != c for t, p in zip(true, pred))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / len(scores)


def hand_kappa(a, b):
    n = len(a)
    labels = sorted(set(a) | set(b))
    po = sum(x == y for x, y in zip(a, b)) / n
    pe = sum((a.count(c) / n) * (b.count(c) / n) for c in labels)
    return 1.0 if math.isclose(pe, 1.0) else (po - pe) / (1 - pe)


def central_difference(f, x, i, h=1e-5):
    """Derivative of scalar f at flat vector x along coordinate i."""
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2 * h)


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def logistic_gradcheck(rng, p=81, k=3, n=16, C=1.0, coords=None):
    """Max relative error of the logistic gradient at one random parameter point."""
    from countyimpact.models.logistic import loss_and_grad

    X = rng.standard_normal((n, p))
    Y = np.eye(k)[rng.integers(0, k, n)]
    theta = rng.standard_normal(p * k + k) * 0.5
    _, g = loss_and_grad(theta, X, Y, C)
    idx = range(len(theta)) if coords is None else rng.choice(len(theta), coords, replace=False)
    f = lambda t: loss_and_grad(t, X, Y, C)[0]
    return max(relative_error(g[i], central_difference(f, theta, i)) for i in idx)


def mlp_gradcheck(rng, hidden, p=81, k=3, n=8, alpha=1e-4, per_array=6):
    """Max relative error of backprop gradients, sampled in every weight and bias array."""
    from countyimpact.models.mlp import init_params, loss_and_grads

    X = rng.standard_normal((n, p))
    Y = np.eye(k)[rng.integers(0, k, n)]
    params = init_params([p, *hidden, k], rng)
    params = [(W, rng.standard_normal(b.shape) * 0.1) for W, b in params]
    _, grads = loss_and_grads(params, X, Y, alpha)
    worst = 0.0
    for layer in range(len(params)):
        for slot in (0, 1):
            arr = params[layer][slot]
            flat = arr.ravel()
            for i in rng.choice(flat.size, min(per_array, flat.size), replace=False):
                def f(v, i=i):
                    old = flat[i]
                    flat[i] = v[0]
                    out = loss_and_grads(params, X, Y, alpha)[0]
                    flat[i] = old
                    return out
                num = central_difference(f, np.array([flat[i]]), 0)
                worst = max(worst, relative_error(grads[layer][slot].ravel()[i], num))
    return worst
