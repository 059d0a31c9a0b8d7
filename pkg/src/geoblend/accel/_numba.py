"""Numba-compiled implementations of the hot kernels.

Mirrors ``geoblend.accel._numpy`` function for function; see that module for
the semantics. Parallel kernels only write disjoint output slots, so results
are independent of the thread count.
"""

import math

import numpy as np
from numba import njit, prange

EARTH_RADIUS_KM = 6371.0


@njit(cache=True, inline="always")
def _dist_scalar(lon1, lat1, lon2, lat2, metric):
    if metric == 0:
        rlat1 = math.radians(lat1)
        rlat2 = math.radians(lat2)
        sdlat = math.sin(0.5 * (rlat2 - rlat1))
        sdlon = math.sin(0.5 * math.radians(lon2 - lon1))
        h = sdlat * sdlat + math.cos(rlat1) * math.cos(rlat2) * sdlon * sdlon
        if h < 0.0:
            h = 0.0
        elif h > 1.0:
            h = 1.0
        return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))
    dx = lon1 - lon2
    dy = lat1 - lat2
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True, parallel=True)
def pairwise_distance(lon, lat, metric):
    n = lon.shape[0]
    out = np.empty((n, n))
    for i in prange(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            d = _dist_scalar(lon[i], lat[i], lon[j], lat[j], metric)
            out[i, j] = d
            out[j, i] = d
    return out


@njit(cache=True, parallel=True)
def cross_distance(lon1, lat1, lon2, lat2, metric):
    n1 = lon1.shape[0]
    n2 = lon2.shape[0]
    out = np.empty((n1, n2))
    for i in prange(n1):
        for j in range(n2):
            out[i, j] = _dist_scalar(lon1[i], lat1[i], lon2[j], lat2[j], metric)
    return out


@njit(cache=True, parallel=True)
def cov_matrix(lon, lat, hour, sill, rho_s, rho_t, nugget, metric):
    n = lon.shape[0]
    out = np.empty((n, n))
    for i in prange(n):
        out[i, i] = sill + nugget
        for j in range(i + 1, n):
            ds = _dist_scalar(lon[i], lat[i], lon[j], lat[j], metric)
            dt = abs(hour[i] - hour[j])
            v = sill * math.exp(-ds / rho_s - dt / rho_t)
            out[i, j] = v
            out[j, i] = v
    return out


@njit(cache=True, parallel=True)
def cross_cov(lon1, lat1, hour1, lon2, lat2, hour2, sill, rho_s, rho_t, metric):
    n1 = lon1.shape[0]
    n2 = lon2.shape[0]
    out = np.empty((n1, n2))
    for i in prange(n1):
        for j in range(n2):
            ds = _dist_scalar(lon1[i], lat1[i], lon2[j], lat2[j], metric)
            dt = abs(hour1[i] - hour2[j])
            out[i, j] = sill * math.exp(-ds / rho_s - dt / rho_t)
    return out


@njit(cache=True)
def _fill_neighbor_system(C, c, lon, lat, hour, nbr_row, tg_lon, tg_lat, tg_hour, sill, rho_s, rho_t, nugget, metric):
    m = nbr_row.shape[0]
    k = 0
    for j in range(m):
        if nbr_row[j] >= 0:
            k += 1
    for a in range(k):
        ia = nbr_row[a]
        C[a, a] = sill + nugget
        for b in range(a + 1, k):
            ib = nbr_row[b]
            ds = _dist_scalar(lon[ia], lat[ia], lon[ib], lat[ib], metric)
            dt = abs(hour[ia] - hour[ib])
            v = sill * math.exp(-ds / rho_s - dt / rho_t)
            C[a, b] = v
            C[b, a] = v
        ds0 = _dist_scalar(lon[ia], lat[ia], tg_lon, tg_lat, metric)
        dt0 = abs(hour[ia] - tg_hour)
        c[a] = sill * math.exp(-ds0 / rho_s - dt0 / rho_t)
    return k


@njit(cache=True)
def vecchia_factor(lon, lat, hour, nbr, sill, rho_s, rho_t, nugget, metric):
    n, m = nbr.shape
    coef = np.zeros((n, m))
    cond_var = np.empty(n)
    C = np.empty((m, m))
    c = np.empty(m)
    for i in range(n):
        k = _fill_neighbor_system(C, c, lon, lat, hour, nbr[i], lon[i], lat[i], hour[i], sill, rho_s, rho_t, nugget, metric)
        if k == 0:
            cond_var[i] = sill + nugget
            continue
        sol = np.linalg.solve(np.ascontiguousarray(C[:k, :k]), np.ascontiguousarray(c[:k]))
        acc = 0.0
        for a in range(k):
            coef[i, a] = sol[a]
            acc += sol[a] * c[a]
        cond_var[i] = sill + nugget - acc
    return coef, cond_var


@njit(cache=True)
def conditional_predict(lon, lat, hour, resid, tg_lon, tg_lat, tg_hour, nbr, sill, rho_s, rho_t, nugget, metric):
    q, m = nbr.shape
    adj = np.zeros(q)
    var = np.empty(q)
    C = np.empty((m, m))
    c = np.empty(m)
    for i in range(q):
        k = _fill_neighbor_system(C, c, lon, lat, hour, nbr[i], tg_lon[i], tg_lat[i], tg_hour[i], sill, rho_s, rho_t, nugget, metric)
        if k == 0:
            var[i] = sill + nugget
            continue
        sol = np.linalg.solve(np.ascontiguousarray(C[:k, :k]), np.ascontiguousarray(c[:k]))
        acc = 0.0
        quad = 0.0
        for a in range(k):
            acc += sol[a] * resid[nbr[i, a]]
            quad += sol[a] * c[a]
        adj[i] = acc
        var[i] = sill + nugget - quad
    return adj, var


@njit(cache=True, inline="always")
def _splitmix64_step(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31)), state


def splitmix64(state):
    value, new_state = _splitmix64_step(np.uint64(state))
    return int(value), int(new_state)


@njit(cache=True)
def _feature_subsample(feats, p, m, state):
    for j in range(p):
        feats[j] = j
    for j in range(m):
        r, state = _splitmix64_step(state)
        k = j + int(r % np.uint64(p - j))
        tmp = feats[j]
        feats[j] = feats[k]
        feats[k] = tmp
    return state


def feature_subsample(p, m, state):
    feats = np.empty(p, dtype=np.int64)
    state = _feature_subsample(feats, p, min(m, p), np.uint64(state))
    return feats[: min(m, p)], int(state)


@njit(cache=True)
def grow_tree(X, y, sample_idx, m_try, min_node_size, max_depth, seed):
    n = sample_idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    idx = sample_idx.astype(np.int64).copy()
    scratch = np.empty(n, dtype=np.int64)
    feats = np.empty(p, dtype=np.int64)
    state = np.uint64(seed)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        size = end - start

        mean = 0.0
        const = True
        y0 = y[idx[start]]
        for t in range(start, end):
            yv = y[idx[t]]
            mean += yv
            if yv != y0:
                const = False
        mean /= size
        value[node] = mean

        if size <= min_node_size or (max_depth >= 0 and depth >= max_depth) or const:
            continue

        m_use = m_try if m_try < p else p
        state = _feature_subsample(feats, p, m_use, state)

        best_gain = -np.inf
        best_f = -1
        best_thr = 0.0
        for fi in range(m_use):
            f = feats[fi]
            xs = np.empty(size)
            ys = np.empty(size)
            for t in range(size):
                xs[t] = X[idx[start + t], f]
            order = np.argsort(xs, kind="mergesort")
            for t in range(size):
                ys[t] = y[idx[start + order[t]]]
            xs = xs[order]
            total = 0.0
            for t in range(size):
                total += ys[t]
            sl = 0.0
            for t in range(size - 1):
                sl += ys[t]
                if xs[t] >= xs[t + 1]:
                    continue
                nl = t + 1.0
                nr = size - nl
                sr = total - sl
                gain = sl * sl / nl + sr * sr / nr
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (xs[t] + xs[t + 1])
        if best_f < 0:
            continue

        n_left = 0
        n_right = 0
        for t in range(start, end):
            row = idx[t]
            if X[row, best_f] <= best_thr:
                scratch[n_left] = row
                n_left += 1
        for t in range(start, end):
            row = idx[t]
            if X[row, best_f] > best_thr:
                scratch[n_left + n_right] = row
                n_right += 1
        for t in range(size):
            idx[start + t] = scratch[t]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], n_nodes


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def smo_solve(D, y, eps, lam, tol, max_iter):
    n = y.shape[0]
    n2 = 2 * n
    beta = np.zeros(n2)
    G = np.empty(n2)
    for k in range(n):
        G[k] = eps - y[k]
        G[n + k] = eps + y[k]

    it = 0
    gap = np.inf
    m_val = 0.0
    big_m = 0.0
    while it < max_iter:
        m_val = -np.inf
        big_m = np.inf
        i = -1
        j = -1
        for k in range(n2):
            sgn = 1.0 if k < n else -1.0
            v = -sgn * G[k]
            if ((sgn > 0.0 and beta[k] < lam) or (sgn < 0.0 and beta[k] > 0.0)) and v > m_val:
                m_val = v
                i = k
            if ((sgn > 0.0 and beta[k] > 0.0) or (sgn < 0.0 and beta[k] < lam)) and v < big_m:
                big_m = v
                j = k
        gap = m_val - big_m
        if gap <= tol:
            break
        ti = i if i < n else i - n
        tj = j if j < n else j - n
        eta = D[ti, ti] + D[tj, tj] - 2.0 * D[ti, tj]
        if eta < 1e-12:
            eta = 1e-12
        s = gap / eta
        si = 1.0 if i < n else -1.0
        sj = 1.0 if j < n else -1.0
        cap_i = lam - beta[i] if si > 0.0 else beta[i]
        cap_j = beta[j] if sj > 0.0 else lam - beta[j]
        if s > cap_i:
            s = cap_i
        if s > cap_j:
            s = cap_j
        beta[i] += si * s
        beta[j] -= sj * s
        for k in range(n):
            delta = s * (D[k, ti] - D[k, tj])
            G[k] += delta
            G[n + k] -= delta
        it += 1

    bias_sum = 0.0
    n_free = 0
    for k in range(n2):
        if beta[k] > 1e-12 * lam and beta[k] < lam * (1.0 - 1e-12):
            sgn = 1.0 if k < n else -1.0
            bias_sum += -sgn * G[k]
            n_free += 1
    if n_free > 0:
        bias = bias_sum / n_free
    else:
        bias = 0.5 * (m_val + big_m)
    return beta[:n].copy(), beta[n:].copy(), bias, it, gap
