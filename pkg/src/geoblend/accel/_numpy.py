"""Vectorized numpy implementations of the hot kernels.

Functionally equivalent to ``geoblend.accel._numba`` (same formulas, same
tie-breaking rules); floating-point results may differ by rounding noise
because the accumulation order differs.
"""

import numpy as np

EARTH_RADIUS_KM = 6371.0

_MASK64 = (1 << 64) - 1


def splitmix64(state):
    """One splitmix64 step. Returns (value, next_state) as python ints."""
    state = (int(state) + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64, state


def feature_subsample(p, m, state):
    """Sample m of p feature indices without replacement (partial Fisher-Yates).

    Returns (indices array, next prng state). Deterministic given state.
    """
    feats = np.arange(p, dtype=np.int64)
    m = min(m, p)
    for j in range(m):
        r, state = splitmix64(state)
        k = j + int(r % (p - j))
        feats[j], feats[k] = feats[k], feats[j]
    return feats[:m], state


def _haversine(lon1, lat1, lon2, lat2):
    rlon1, rlat1 = np.radians(lon1), np.radians(lat1)
    rlon2, rlat2 = np.radians(lon2), np.radians(lat2)
    sdlat = np.sin((rlat2 - rlat1) * 0.5)
    sdlon = np.sin((rlon2 - rlon1) * 0.5)
    h = sdlat * sdlat + np.cos(rlat1) * np.cos(rlat2) * sdlon * sdlon
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _dist(lon1, lat1, lon2, lat2, metric):
    if metric == 0:
        return _haversine(lon1, lat1, lon2, lat2)
    return np.sqrt((lon1 - lon2) ** 2 + (lat1 - lat2) ** 2)


def pairwise_distance(lon, lat, metric):
    return _dist(lon[:, None], lat[:, None], lon[None, :], lat[None, :], metric)


def cross_distance(lon1, lat1, lon2, lat2, metric):
    return _dist(lon1[:, None], lat1[:, None], lon2[None, :], lat2[None, :], metric)


def cov_matrix(lon, lat, hour, sill, rho_s, rho_t, nugget, metric):
    ds = pairwise_distance(lon, lat, metric)
    dt = np.abs(hour[:, None] - hour[None, :])
    cov = sill * np.exp(-ds / rho_s - dt / rho_t)
    cov[np.diag_indices_from(cov)] += nugget
    return cov


def cross_cov(lon1, lat1, hour1, lon2, lat2, hour2, sill, rho_s, rho_t, metric):
    ds = cross_distance(lon1, lat1, lon2, lat2, metric)
    dt = np.abs(hour1[:, None] - hour2[None, :])
    return sill * np.exp(-ds / rho_s - dt / rho_t)


def _neighbor_systems(lon, lat, hour, nbr, tg_lon, tg_lat, tg_hour, sill, rho_s, rho_t, nugget, metric):
    """Build per-row neighbor covariance systems, padded entries inert.

    Returns (C, c, mask): C is (q, m, m), c is (q, m); rows/cols for padded
    neighbor slots are identity/zero so the solve leaves them with zero weight.
    """
    q, m = nbr.shape
    mask = nbr >= 0
    safe = np.where(mask, nbr, 0)
    nl, na, nh = lon[safe], lat[safe], hour[safe]

    ds = _dist(nl[:, :, None], na[:, :, None], nl[:, None, :], na[:, None, :], metric)
    dt = np.abs(nh[:, :, None] - nh[:, None, :])
    C = sill * np.exp(-ds / rho_s - dt / rho_t)
    ii = np.arange(m)
    C[:, ii, ii] += nugget

    ds0 = _dist(nl, na, tg_lon[:, None], tg_lat[:, None], metric)
    dt0 = np.abs(nh - tg_hour[:, None])
    c = sill * np.exp(-ds0 / rho_s - dt0 / rho_t)

    pad = ~mask
    C[pad[:, :, None] | pad[:, None, :]] = 0.0
    C[:, ii, ii] = np.where(pad, 1.0, C[:, ii, ii])
    c[pad] = 0.0
    return C, c, mask


def vecchia_factor(lon, lat, hour, nbr, sill, rho_s, rho_t, nugget, metric):
    """Row-wise conditional coefficients and variances for an ordered graph.

    For each row i with neighbors N_i: coef = C_N^{-1} c_i and
    cond_var = (sill + nugget) - c_i' C_N^{-1} c_i.
    """
    C, c, _ = _neighbor_systems(lon, lat, hour, nbr, lon, lat, hour, sill, rho_s, rho_t, nugget, metric)
    coef = np.linalg.solve(C, c[..., None])[..., 0]
    cond_var = (sill + nugget) - np.einsum("ij,ij->i", coef, c)
    return coef, cond_var


def conditional_predict(lon, lat, hour, resid, tg_lon, tg_lat, tg_hour, nbr, sill, rho_s, rho_t, nugget, metric):
    """Conditional-Gaussian adjustment and variance at target points.

    adj[i] = c_i' C_N^{-1} resid[N_i]; var[i] = sill + nugget - c_i' C_N^{-1} c_i.
    """
    C, c, mask = _neighbor_systems(lon, lat, hour, nbr, tg_lon, tg_lat, tg_hour, sill, rho_s, rho_t, nugget, metric)
    coef = np.linalg.solve(C, c[..., None])[..., 0]
    r = np.where(mask, resid[np.where(mask, nbr, 0)], 0.0)
    adj = np.einsum("ij,ij->i", coef, r)
    var = (sill + nugget) - np.einsum("ij,ij->i", coef, c)
    return adj, var


def _best_split(xs, ys):
    """Best RSS split of one sorted feature column.

    Returns (gain, threshold); gain is -inf when no valid split exists.
    Gain is sum_L^2/n_L + sum_R^2/n_R (maximizing it minimizes child RSS);
    ties keep the leftmost candidate, matching the numba scan.
    """
    k = xs.shape[0]
    cl = np.cumsum(ys)[:-1]
    total = cl[-1] + ys[-1] if k > 1 else ys.sum()
    nl = np.arange(1, k, dtype=np.float64)
    gain = cl * cl / nl + (total - cl) * (total - cl) / (k - nl)
    gain[xs[:-1] >= xs[1:]] = -np.inf
    pos = int(np.argmax(gain))
    if not np.isfinite(gain[pos]):
        return -np.inf, 0.0
    return float(gain[pos]), float(0.5 * (xs[pos] + xs[pos + 1]))


def grow_tree(X, y, sample_idx, m_try, min_node_size, max_depth, seed):
    """Grow one CART regression tree on the given bootstrap rows.

    Returns (feature, threshold, left, right, value, n_nodes); feature == -1
    marks a leaf. Nodes with <= min_node_size rows, at max_depth (when >= 0),
    or with constant response become leaves. Leaf value is the response mean.
    """
    n = sample_idx.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    idx = sample_idx.astype(np.int64).copy()
    state = int(seed)
    # stack of (node, start, end, depth)
    stack = [(0, 0, n, 0)]
    n_nodes = 1
    p = X.shape[1]

    while stack:
        node, start, end, depth = stack.pop()
        rows = idx[start:end]
        yn = y[rows]
        value[node] = yn.mean()
        size = end - start
        if size <= min_node_size or (0 <= max_depth <= depth) or np.all(yn == yn[0]):
            continue

        feats, state = feature_subsample(p, m_try, state)
        best_gain = -np.inf
        best_f = -1
        best_thr = 0.0
        for f in feats:
            xs = X[rows, f]
            order = np.argsort(xs, kind="stable")
            gain, thr = _best_split(xs[order], yn[order])
            if gain > best_gain:
                best_gain, best_f, best_thr = gain, f, thr
        if best_f < 0:
            continue

        go_left = X[rows, best_f] <= best_thr
        n_left = int(go_left.sum())
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack.append((n_nodes + 1, start + n_left, end, depth + 1))
        stack.append((n_nodes, start, start + n_left, depth + 1))
        n_nodes += 2

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], n_nodes


def predict_tree(feature, threshold, left, right, value, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        cur = node[rows]
        goes_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(goes_left, left[cur], right[cur])
        active[rows] = feature[node[rows]] >= 0
    return value[node]


def smo_solve(D, y, eps, lam, tol, max_iter):
    """Pairwise working-set ascent for the epsilon-tube kernel-regression dual.

    Variables beta = [alpha_star; alpha] (2N), box [0, lam], constraint
    sum(alpha) == sum(alpha_star). Selection is the maximal violating pair.
    Returns (alpha_star, alpha, bias, n_iter, kkt_gap).
    """
    n = y.shape[0]
    beta = np.zeros(2 * n)
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    G = np.concatenate([eps - y, eps + y])
    tilde = np.concatenate([np.arange(n), np.arange(n)])
    diag = np.diag(D)

    it = 0
    gap = np.inf
    while it < max_iter:
        vals = -sign * G
        up = np.where((sign > 0) & (beta < lam) | (sign < 0) & (beta > 0), vals, -np.inf)
        low = np.where((sign > 0) & (beta > 0) | (sign < 0) & (beta < lam), vals, np.inf)
        i = int(np.argmax(up))
        j = int(np.argmin(low))
        m_val = up[i]
        big_m = low[j]
        gap = m_val - big_m
        if gap <= tol:
            break
        ti, tj = tilde[i], tilde[j]
        eta = max(diag[ti] + diag[tj] - 2.0 * D[ti, tj], 1e-12)
        s = gap / eta
        s = min(s, lam - beta[i] if sign[i] > 0 else beta[i])
        s = min(s, beta[j] if sign[j] > 0 else lam - beta[j])
        beta[i] += sign[i] * s
        beta[j] -= sign[j] * s
        delta = s * (D[:, ti] - D[:, tj])
        G[:n] += delta
        G[n:] -= delta
        it += 1

    free = (beta > 1e-12 * lam) & (beta < lam * (1.0 - 1e-12))
    if free.any():
        bias = float(np.mean((-sign * G)[free]))
    else:
        bias = float(0.5 * (m_val + big_m))
    return beta[:n].copy(), beta[n:].copy(), bias, it, float(gap)
