"""Numba kernels for histogram tree growth and prediction.

Features are pre-binned to uint8 codes; code ``MISSING`` marks NaN.  A
split on bin ``b`` sends codes ``<= b`` left, which on raw values means
``x <= thresholds[b]``.

Histograms are flat: feature ``f`` owns slots ``offsets[f] .. offsets[f] +
n_bins[f]``, the last of which collects missing values.  Each slot holds
(sum g, sum h, count).
"""
import numpy as np
from numba import njit

MISSING = 255
MAX_BINS = 255


def feature_thresholds(x: np.ndarray, max_bins: int = MAX_BINS) -> np.ndarray:
    """Candidate split points for one feature (midpoints between distinct values)."""
    u = np.unique(x[~np.isnan(x)])
    if u.size <= 1:
        return np.empty(0)
    if u.size <= max_bins:
        return 0.5 * (u[:-1] + u[1:])
    pos = np.unique(np.round(np.linspace(0, u.size - 1, max_bins + 1)[1:-1]).astype(np.int64))
    pos = pos[pos < u.size - 1]
    return 0.5 * (u[pos] + u[pos + 1])


def bin_features(X: np.ndarray, thresholds) -> np.ndarray:
    Xb = np.empty(X.shape, dtype=np.uint8)
    for f, thr in enumerate(thresholds):
        col = X[:, f]
        codes = np.searchsorted(thr, col, side="left")
        codes[np.isnan(col)] = MISSING
        Xb[:, f] = codes
    return Xb


def hist_layout(Xb: np.ndarray, n_bins: np.ndarray):
    """Slot offsets per feature and each cell's flat histogram slot."""
    offsets = np.concatenate([[0], np.cumsum(n_bins + 1)[:-1]]).astype(np.int64)
    slots = Xb.astype(np.int64)
    for f in range(Xb.shape[1]):
        col = slots[:, f]
        col[col == MISSING] = n_bins[f]
        col += offsets[f]
    return offsets, np.ascontiguousarray(slots, dtype=np.int32)


@njit(cache=True)
def _leaf_score(G, H, lam, floor):
    if H < floor:
        H = floor
    return G * G / (H + lam)


@njit(cache=True)
def _best_split(hist, feats, offsets, n_bins, G, H, C, lam, floor, min_leaf, min_gain):
    parent = _leaf_score(G, H, lam, floor)
    best_gain = min_gain
    best_f = -1
    best_b = -1
    best_dl = False
    for fi in range(feats.shape[0]):
        f = feats[fi]
        nb = n_bins[f]
        if nb < 2:
            continue
        o = offsets[f]
        gm = hist[o + nb, 0]
        hm = hist[o + nb, 1]
        cm = hist[o + nb, 2]
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(nb - 1):
            cb = hist[o + b, 2]
            if cb == 0:
                # same row split as the previous bin
                continue
            gl += hist[o + b, 0]
            hl += hist[o + b, 1]
            cl += cb
            if C - cl < min_leaf:
                break
            if cl >= min_leaf:
                gain = (_leaf_score(gl, hl, lam, floor)
                        + _leaf_score(G - gl, H - hl, lam, floor) - parent)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = b
                    best_dl = False
            if cm > 0:
                cl2 = cl + cm
                if cl2 >= min_leaf and C - cl2 >= min_leaf:
                    gain = (_leaf_score(gl + gm, hl + hm, lam, floor)
                            + _leaf_score(G - gl - gm, H - hl - hm, lam, floor) - parent)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_b = b
                        best_dl = True
    return best_f, best_b, best_dl, best_gain


@njit(cache=True)
def _fill_hist(slots, idx, start, end, g, h, hist):
    hist[:] = 0.0
    F = slots.shape[1]
    for p in range(start, end):
        r = idx[p]
        gr = g[r]
        hr = h[r]
        for f in range(F):
            s = slots[r, f]
            hist[s, 0] += gr
            hist[s, 1] += hr
            hist[s, 2] += 1.0


@njit(cache=True)
def best_root_split(slots, offsets, n_bins, g, h, lam, floor, min_leaf):
    n, F = slots.shape
    hist = np.empty((offsets[-1] + n_bins[-1] + 1, 3))
    _fill_hist(slots, np.arange(n), 0, n, g, h, hist)
    return _best_split(hist, np.arange(F), offsets, n_bins, g.sum(), h.sum(), n,
                       lam, floor, min_leaf, 0.0)


@njit(cache=True)
def grow_round(Xb, slots, offsets, Xvb, n_bins, grad, hess, S, Sv,
               max_depth, min_leaf, lam, floor, lr, min_gain,
               feat_keys, n_feat_sample, hist,
               o_feat, o_bin, o_dl, o_left, o_right, o_val, o_n):
    """Grow one tree per class on (grad[c], hess[c]) and apply it to S and Sv.

    ``grad``/``hess`` are (k, n).  ``hist`` is scratch space of shape
    (max_nodes, slots, 3).  Trees are written into the ``o_*`` arrays,
    row ``c`` for class ``c``; nodes are numbered breadth-first.
    """
    n, F = Xb.shape
    k = grad.shape[0]
    nv = Xvb.shape[0]
    max_nodes = o_feat.shape[1]
    idx = np.empty(n, dtype=np.int64)
    tmp = np.empty(n, dtype=np.int64)
    starts = np.empty(max_nodes, dtype=np.int64)
    ends = np.empty(max_nodes, dtype=np.int64)
    depth = np.empty(max_nodes, dtype=np.int64)
    all_feats = np.arange(F)
    sample = n_feat_sample < F

    for c in range(k):
        g = grad[c]
        h = hess[c]
        for i in range(n):
            idx[i] = i
        starts[0] = 0
        ends[0] = n
        depth[0] = 0
        nn = 1
        head = 0
        if max_depth > 0 and n >= 2 * min_leaf:
            _fill_hist(slots, idx, 0, n, g, h, hist[0])
        while head < nn:
            node = head
            head += 1
            s0 = starts[node]
            e0 = ends[node]
            G = 0.0
            H = 0.0
            for p in range(s0, e0):
                G += g[idx[p]]
                H += h[idx[p]]
            best_f = -1
            best_b = -1
            best_dl = False
            # a node has a histogram exactly when this test passes
            if depth[node] < max_depth and e0 - s0 >= 2 * min_leaf:
                if sample:
                    feats = np.sort(np.argsort(feat_keys[c, node])[:n_feat_sample])
                else:
                    feats = all_feats
                best_f, best_b, best_dl, _ = _best_split(
                    hist[node], feats, offsets, n_bins, G, H, e0 - s0,
                    lam, floor, min_leaf, min_gain)
            if best_f >= 0:
                nl = 0
                nr = 0
                for p in range(s0, e0):
                    r = idx[p]
                    b = Xb[r, best_f]
                    if b == MISSING:
                        left = best_dl
                    else:
                        left = b <= best_b
                    if left:
                        idx[s0 + nl] = r
                        nl += 1
                    else:
                        tmp[nr] = r
                        nr += 1
                for j in range(nr):
                    idx[s0 + nl + j] = tmp[j]
                lc = nn
                rc = nn + 1
                o_feat[c, node] = best_f
                o_bin[c, node] = best_b
                o_dl[c, node] = best_dl
                o_left[c, node] = lc
                o_right[c, node] = rc
                o_val[c, node] = 0.0
                starts[lc] = s0
                ends[lc] = s0 + nl
                starts[rc] = s0 + nl
                ends[rc] = e0
                depth[lc] = depth[node] + 1
                depth[rc] = depth[node] + 1
                nn += 2
                if depth[lc] < max_depth:
                    need_l = nl >= 2 * min_leaf
                    need_r = nr >= 2 * min_leaf
                    if need_l or need_r:
                        small, big = (lc, rc) if nl <= nr else (rc, lc)
                        _fill_hist(slots, idx, starts[small], ends[small], g, h, hist[small])
                        hb = hist[big]
                        hp = hist[node]
                        hs = hist[small]
                        for s in range(hb.shape[0]):
                            hb[s, 0] = hp[s, 0] - hs[s, 0]
                            hb[s, 1] = hp[s, 1] - hs[s, 1]
                            hb[s, 2] = hp[s, 2] - hs[s, 2]
            else:
                Hc = H if H > floor else floor
                val = -lr * G / (Hc + lam)
                o_feat[c, node] = -1
                o_bin[c, node] = -1
                o_dl[c, node] = False
                o_left[c, node] = -1
                o_right[c, node] = -1
                o_val[c, node] = val
                for p in range(s0, e0):
                    S[idx[p], c] += val
        o_n[c] = nn

        for i in range(nv):
            node = 0
            while o_feat[c, node] >= 0:
                b = Xvb[i, o_feat[c, node]]
                if b == MISSING:
                    go_left = o_dl[c, node]
                else:
                    go_left = b <= o_bin[c, node]
                node = o_left[c, node] if go_left else o_right[c, node]
            Sv[i, c] += o_val[c, node]


@njit(cache=True)
def predict_raw(X, feature, threshold, default_left, left, right, value,
                roots, tree_class, base):
    n = X.shape[0]
    k = base.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for c in range(k):
            out[i, c] = base[c]
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                x = X[i, feature[node]]
                if np.isnan(x):
                    go_left = default_left[node]
                else:
                    go_left = x <= threshold[node]
                node = left[node] if go_left else right[node]
            out[i, tree_class[t]] += value[node]
    return out
