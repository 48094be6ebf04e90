"""Independent reference implementations used only by the tests."""

import numpy as np
from scipy.optimize import least_squares


def linear_bd(x, y, a, c):
    """Best (b, d) for fixed (a, c): ordinary linear least squares."""
    A = np.column_stack([np.tanh(a * x - c), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = A @ coef - y
    return coef[0], coef[1], float(r @ r)


def feasible_box(y):
    b_max = 2 * float(np.ptp(y)) + 1
    return b_max, y.min() - 2 * b_max, y.max() + 2 * b_max


def grid_bd(x, y, a_values, centres):
    """Vectorized linear solve of (b, d) over every (a, centre) grid cell.

    Returns arrays b, d, sse of shape (len(a_values), len(centres)).
    """
    a = np.asarray(a_values)[:, None, None]
    m = np.asarray(centres)[None, :, None]
    t = np.tanh(a * (x[None, None, :] - m))
    n = x.size
    st, stt = t.sum(-1), (t * t).sum(-1)
    sy, sty = y.sum(), (t * y).sum(-1)
    det = n * stt - st * st
    with np.errstate(invalid="ignore", divide="ignore"):
        b = (n * sty - st * sy) / det
        d = (sy - b * st) / n
        r = d[..., None] + b[..., None] * t - y
        sse = (r * r).sum(-1)
    return b, d, np.where(np.isfinite(sse), sse, np.inf)


def grid_then_polish(x, y, T, sign=None):
    """Global tanh fit: grid over pace and centre, then bounded scipy polish.

    Parameterised by (a, b, m, d) with c = a * m so the box on the centre is
    a plain bound.  Uses the same feasible box as the package.
    """
    b_max, d_lo, d_hi = feasible_box(y)
    signs = [sign] if sign else [1.0, -1.0]
    mags = np.geomspace(1e-3, 50, 80)
    centres = np.linspace(-(T + 5), T + 5, 81)
    best = None
    for s in signs:
        b, d, sse = grid_bd(x, y, s * mags, centres)
        ok = (b >= 0) & (b <= b_max) & (d >= d_lo) & (d <= d_hi)
        sse = np.where(ok, sse, np.inf)
        i, j = np.unravel_index(np.argmin(sse), sse.shape)
        if np.isfinite(sse[i, j]) and (best is None or sse[i, j] < best[0]):
            best = (sse[i, j], s * mags[i], b[i, j], centres[j], d[i, j])
    _, a, b, m, d = best
    s = np.sign(a)
    lo = [1e-3, 0, -(T + 5), d_lo] if s > 0 else [-50, 0, -(T + 5), d_lo]
    hi = [50, b_max, T + 5, d_hi] if s > 0 else [-1e-3, b_max, T + 5, d_hi]

    def res(q):
        return q[3] + q[1] * np.tanh(q[0] * (x - q[2])) - y

    q0 = np.clip([a, b, m, d], np.array(lo) + 1e-12, np.array(hi) - 1e-12)
    sol = least_squares(res, q0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    a, b, m, d = sol.x
    r = res(sol.x)
    return (a, b, a * m, d), float(r @ r)


def brute_silhouette(X, labels):
    """Silhouette by explicit loops over cosine distances."""
    n = len(X)
    Xn = [v / np.linalg.norm(v) for v in X]

    def dist(i, j):
        return max(0.0, 1.0 - float(np.dot(Xn[i], Xn[j])))

    total = 0.0
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = min(
            sum(dist(i, j) for j in range(n) if labels[j] == k) / sum(1 for j in range(n) if labels[j] == k)
            for k in set(labels)
            if k != labels[i]
        )
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / n


def brute_dbi(X, labels):
    """Davies-Bouldin with re-normalized centroids, by explicit loops."""
    ks = sorted(set(labels))
    Xn = [v / np.linalg.norm(v) for v in X]
    cents, spread = {}, {}
    for k in ks:
        members = [Xn[i] for i in range(len(Xn)) if labels[i] == k]
        c = sum(members) / len(members)
        c = c / np.linalg.norm(c)
        cents[k] = c
        spread[k] = sum(max(0.0, 1 - float(np.dot(m, c))) for m in members) / len(members)
    out = 0.0
    for i in ks:
        worst = 0.0
        for j in ks:
            if i == j:
                continue
            m = max(0.0, 1 - float(np.dot(cents[i], cents[j])))
            r = (spread[i] + spread[j]) / m if m > 0 else (float("inf") if spread[i] + spread[j] > 0 else 0.0)
            worst = max(worst, r)
        out += worst
    return out / len(ks)


def brute_complete_linkage_heights(X):
    """Merge heights of complete linkage from scratch on explicit clusters."""
    Xn = [v / np.linalg.norm(v) for v in X]
    clusters = [[i] for i in range(len(Xn))]

    def dist(i, j):
        return max(0.0, 1.0 - float(np.dot(Xn[i], Xn[j])))

    heights = []
    while len(clusters) > 1:
        best = None
        for p in range(len(clusters)):
            for q in range(p + 1, len(clusters)):
                h = max(dist(i, j) for i in clusters[p] for j in clusters[q])
                if best is None or h < best[0]:
                    best = (h, p, q)
        h, p, q = best
        heights.append(h)
        clusters[p] = clusters[p] + clusters[q]
        del clusters[q]
    return heights


def fleiss_by_hand(counts):
    counts = np.asarray(counts, dtype=float)
    N, _ = counts.shape
    n = counts[0].sum()
    P = [(sum(c * c for c in row) - n) / (n * (n - 1)) for row in counts]
    pj = counts.sum(axis=0) / (N * n)
    Pbar, Pe = sum(P) / N, sum(p * p for p in pj)
    return (Pbar - Pe) / (1 - Pe)


def active_len_grid(a, b, c, T, theta, mode="per_curve", speed_max=None, n=100_001):
    """Measure {x in [0, T] : s_hat(x) >= theta} by midpoint counting on a dense grid.

    Works with log cosh (via logaddexp) so far-tail curves do not saturate.
    """
    edges = np.linspace(0.0, T, n)
    mid = (edges[:-1] + edges[1:]) / 2

    def log_sech2(x):
        u = a * x - c
        return -2.0 * (np.logaddexp(u, -u) - np.log(2.0))

    ls = log_sech2(mid)
    if mode == "per_curve":
        centre = c / a
        candidates = [0.0, float(T)] + ([centre] if 0 <= centre <= T else [])
        log_peak = max(float(log_sech2(np.array(x))) for x in candidates)
        log_hat = ls - log_peak
    else:
        log_hat = np.log(abs(a * b)) + ls - np.log(speed_max)
    return float(np.count_nonzero(log_hat >= np.log(theta))) * (T / (n - 1))


def three_gaussians(seed=0, per=20, sigma=0.05, dim=5):
    """Three tight clusters around orthogonal unit centres."""
    rng = np.random.default_rng(seed)
    centres = np.eye(dim)[:3]
    X = np.vstack([c + sigma * rng.standard_normal((per, dim)) for c in centres])
    truth = np.repeat(np.arange(3), per)
    return X, truth
