"""Numba kernels for tree growing and traversal.

Trees are stored as flat arrays: ``feature`` (-1 at leaves), ``threshold``
(go left when ``x <= threshold``), ``left``/``right`` child indices and
``value`` (leaf output). Split ties resolve to the lower feature index, then
the lower threshold.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True, nogil=True)
def _next_u64(state):
    # splitmix64
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _randbelow(state, n):
    # 53 random bits scaled; bias is negligible for feature counts
    u = (_next_u64(state) >> _S11) * (1.0 / 9007199254740992.0)
    k = int(u * n)
    return k if k < n else n - 1


@njit(cache=True, nogil=True)
def _midpoint(v0, v1):
    thr = 0.5 * (v0 + v1)
    if thr >= v1:
        thr = v0
    return thr


@njit(cache=True, nogil=True)
def _sort_pairs(keys, perm, n, stack):
    """In-place ascending sort of ``keys[:n]`` carrying ``perm`` along.

    ``stack`` is scratch space of at least 128 slots.
    """
    top = 0
    lo = 0
    hi = n - 1
    while True:
        while hi - lo > 16:
            mid = (lo + hi) >> 1
            # median of three into keys[mid]
            if keys[mid] < keys[lo]:
                keys[mid], keys[lo] = keys[lo], keys[mid]
                perm[mid], perm[lo] = perm[lo], perm[mid]
            if keys[hi] < keys[lo]:
                keys[hi], keys[lo] = keys[lo], keys[hi]
                perm[hi], perm[lo] = perm[lo], perm[hi]
            if keys[hi] < keys[mid]:
                keys[hi], keys[mid] = keys[mid], keys[hi]
                perm[hi], perm[mid] = perm[mid], perm[hi]
            pivot = keys[mid]
            i = lo
            j = hi
            while i <= j:
                while keys[i] < pivot:
                    i += 1
                while keys[j] > pivot:
                    j -= 1
                if i <= j:
                    keys[i], keys[j] = keys[j], keys[i]
                    perm[i], perm[j] = perm[j], perm[i]
                    i += 1
                    j -= 1
            # recurse into the smaller side later, loop on the larger
            if j - lo < hi - i:
                stack[top] = i
                stack[top + 1] = hi
                top += 2
                hi = j
            else:
                stack[top] = lo
                stack[top + 1] = j
                top += 2
                lo = i
        for i in range(lo + 1, hi + 1):
            k = keys[i]
            q = perm[i]
            j = i - 1
            while j >= lo and keys[j] > k:
                keys[j + 1] = keys[j]
                perm[j + 1] = perm[j]
                j -= 1
            keys[j + 1] = k
            perm[j + 1] = q
        if top == 0:
            break
        top -= 2
        lo = stack[top]
        hi = stack[top + 1]


@njit(cache=True, nogil=True)
def grow_gini_tree(X, codes, uniq, uoff, rows, weight, y, max_features, max_depth, min_samples_split, seed):
    """Grow one classification tree on ``X[rows]``.

    ``weight`` and ``y`` are aligned with ``rows`` (not with ``X``).
    ``max_depth < 0`` means unlimited. Leaf values are the weighted fraction
    of positives. Features are drawn per node without replacement until
    ``max_features`` non-constant ones have been evaluated. Split search uses
    a per-node histogram over global value ranks when that is cheaper than
    sorting; both routes enumerate the same candidate thresholds.
    """
    n = rows.size
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)

    kmax = 0
    for f in range(d):
        kmax = max(kmax, uoff[f + 1] - uoff[f])
    binW = np.zeros(kmax)
    binP = np.zeros(kmax)

    idx = np.arange(n)
    vals = np.empty(n)
    cbuf = np.empty(n, np.int64)
    pbuf = np.empty(n, np.int64)
    sort_stack = np.empty(128, np.int64)
    feats = np.arange(d)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]

        W = 0.0
        P = 0.0
        for k in range(lo, hi):
            r = idx[k]
            W += weight[r]
            P += weight[r] * y[r]
        value[node] = P / W if W > 0 else 0.0
        if hi - lo < 2 or W < min_samples_split or P <= 0.0 or P >= W:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        parent = P * (W - P) / W
        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        m = hi - lo
        drawn = 0
        i = 0
        while i < d and drawn < max_features:
            j = i + _randbelow(state, d - i)
            tmp = feats[i]
            feats[i] = feats[j]
            feats[j] = tmp
            f = feats[i]
            i += 1

            cmin = 1 << 62
            cmax = -1
            for k in range(m):
                c = codes[f, rows[idx[lo + k]]]
                cbuf[k] = c
                if c < cmin:
                    cmin = c
                if c > cmax:
                    cmax = c
            if cmin == cmax:
                continue
            drawn += 1
            base = uoff[f]

            if cmax - cmin + 1 <= 4 * m:
                for k in range(m):
                    r = idx[lo + k]
                    c = cbuf[k]
                    binW[c] += weight[r]
                    binP[c] += weight[r] * y[r]
                WL = 0.0
                PL = 0.0
                prev = -1
                for c in range(cmin, cmax + 1):
                    if binW[c] == 0.0:
                        continue
                    if prev >= 0:
                        WR = W - WL
                        PR = P - PL
                        score = PL * (WL - PL) / WL + PR * (WR - PR) / WR
                        gain = parent - score
                        thr = _midpoint(uniq[base + prev], uniq[base + c])
                        if gain > best_gain or (
                            gain == best_gain and (f < best_f or (f == best_f and thr < best_thr))
                        ):
                            best_gain = gain
                            best_f = f
                            best_thr = thr
                    WL += binW[c]
                    PL += binP[c]
                    prev = c
                for c in range(cmin, cmax + 1):
                    binW[c] = 0.0
                    binP[c] = 0.0
            else:
                for k in range(m):
                    vals[k] = uniq[base + cbuf[k]]
                    pbuf[k] = idx[lo + k]
                _sort_pairs(vals, pbuf, m, sort_stack)
                WL = 0.0
                PL = 0.0
                for k in range(m - 1):
                    r = pbuf[k]
                    WL += weight[r]
                    PL += weight[r] * y[r]
                    v0 = vals[k]
                    v1 = vals[k + 1]
                    if v1 <= v0:
                        continue
                    WR = W - WL
                    PR = P - PL
                    score = PL * (WL - PL) / WL + PR * (WR - PR) / WR
                    gain = parent - score
                    thr = _midpoint(v0, v1)
                    if gain > best_gain or (
                        gain == best_gain and (f < best_f or (f == best_f and thr < best_thr))
                    ):
                        best_gain = gain
                        best_f = f
                        best_thr = thr

        if best_f < 0:
            continue

        # partition idx[lo:hi] in place: left block first
        a = lo
        b = hi - 1
        while a <= b:
            if X[rows[idx[a]], best_f] <= best_thr:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is grown first
        st_node[top] = rnode
        st_lo[top] = a
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = a
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _newton_gain(gl, hl, gr, hr, g, h, reg_lambda, gamma):
    return 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - g * g / (h + reg_lambda)) - gamma


@njit(cache=True, nogil=True)
def grow_newton_tree(X, uniq, uoff, dflt, nz_ptr, nz_row, nz_code, order, svals, grad, hess,
                     max_depth, reg_lambda, gamma, min_child_weight):
    """Grow one second-order boosting tree level by level (exact greedy).

    Per feature and level, candidate splits are scanned either from per-node
    histograms over value ranks (low-cardinality columns) or by walking the
    presorted column. Leaf values are the unshrunk Newton weights
    ``-G / (H + lambda)``.
    """
    n, d = X.shape
    cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    G = np.zeros(cap)
    H = np.zeros(cap)
    N = np.zeros(cap, np.int64)

    node_of = np.zeros(n, np.int64)
    for i in range(n):
        G[0] += grad[i]
        H[0] += hess[i]
    N[0] = n
    n_nodes = 1
    level_start = 0
    level_end = 1

    for depth in range(max_depth):
        nf = level_end - level_start
        slot = np.full(n, -1, np.int64)
        for i in range(n):
            if node_of[i] >= level_start:
                slot[i] = node_of[i] - level_start
        best_gain = np.zeros(nf)
        best_f = np.full(nf, -1, np.int64)
        best_thr = np.zeros(nf)
        GL = np.zeros(nf)
        HL = np.zeros(nf)
        last = np.zeros(nf)
        seen = np.zeros(nf, np.bool_)
        for f in range(d):
            base = uoff[f]
            k = uoff[f + 1] - base
            if k < 2:
                continue
            if nf * k <= n:
                hg = np.zeros(nf * k)
                hh = np.zeros(nf * k)
                hc = np.zeros(nf * k, np.int64)
                # only rows off the column's most frequent value are visited;
                # that bin is filled from the node totals afterwards
                for j in range(nz_ptr[f], nz_ptr[f + 1]):
                    i = nz_row[j]
                    s = slot[i]
                    if s < 0:
                        continue
                    c = s * k + nz_code[j]
                    hg[c] += grad[i]
                    hh[c] += hess[i]
                    hc[c] += 1
                dc = dflt[f]
                for s in range(nf):
                    node = level_start + s
                    sg = 0.0
                    sh = 0.0
                    sc = 0
                    for c in range(k):
                        sg += hg[s * k + c]
                        sh += hh[s * k + c]
                        sc += hc[s * k + c]
                    hg[s * k + dc] = G[node] - sg
                    hh[s * k + dc] = H[node] - sh
                    hc[s * k + dc] = N[node] - sc
                for s in range(nf):
                    node = level_start + s
                    gl = 0.0
                    hl = 0.0
                    prev = -1
                    for c in range(k):
                        if hc[s * k + c] == 0:
                            continue
                        if prev >= 0:
                            hr = H[node] - hl
                            if hl >= min_child_weight and hr >= min_child_weight:
                                gain = _newton_gain(gl, hl, G[node] - gl, hr, G[node], H[node], reg_lambda, gamma)
                                if gain > best_gain[s]:
                                    best_gain[s] = gain
                                    best_f[s] = f
                                    best_thr[s] = _midpoint(uniq[base + prev], uniq[base + c])
                        gl += hg[s * k + c]
                        hl += hh[s * k + c]
                        prev = c
            else:
                GL[:] = 0.0
                HL[:] = 0.0
                seen[:] = False
                for j in range(n):
                    i = order[f, j]
                    s = slot[i]
                    if s < 0:
                        continue
                    node = level_start + s
                    v = svals[f, j]
                    if seen[s] and v > last[s]:
                        hl = HL[s]
                        hr = H[node] - hl
                        if hl >= min_child_weight and hr >= min_child_weight:
                            gain = _newton_gain(GL[s], hl, G[node] - GL[s], hr, G[node], H[node], reg_lambda, gamma)
                            if gain > best_gain[s]:
                                best_gain[s] = gain
                                best_f[s] = f
                                best_thr[s] = _midpoint(last[s], v)
                    GL[s] += grad[i]
                    HL[s] += hess[i]
                    last[s] = v
                    seen[s] = True

        any_split = False
        for s in range(nf):
            node = level_start + s
            if best_f[s] < 0:
                continue
            any_split = True
            feature[node] = best_f[s]
            threshold[node] = best_thr[s]
            left[node] = n_nodes
            right[node] = n_nodes + 1
            n_nodes += 2
        if not any_split:
            break
        for i in range(n):
            node = node_of[i]
            if node < 0:
                continue
            if feature[node] < 0:
                node_of[i] = -1  # settled in a leaf
                continue
            if X[i, feature[node]] <= threshold[node]:
                child = left[node]
            else:
                child = right[node]
            node_of[i] = child
            G[child] += grad[i]
            H[child] += hess[i]
            N[child] += 1
        level_start = level_end
        level_end = n_nodes

    for node in range(n_nodes):
        if feature[node] < 0:
            value[node] = -G[node] / (H[node] + reg_lambda)
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_trees(X, offsets, feature, threshold, left, right, value):
    """Per-row sum of leaf values over concatenated trees.

    Child indices are local to each tree; ``offsets[t]`` is tree ``t``'s
    start in the flat arrays.
    """
    n = X.shape[0]
    out = np.zeros(n)
    # tree-major keeps one tree's nodes hot in cache; per-row summation order is unchanged
    for t in range(offsets.size - 1):
        base = offsets[t]
        for r in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[r] += value[base + node]
    return out


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by each row."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
