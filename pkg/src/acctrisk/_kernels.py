"""Hot numeric kernels: split search, tree traversal, lasso sweeps.

Two interchangeable backends with identical semantics:

* numba ``@njit`` loops (the default whenever numba imports cleanly), and
* a pure-numpy implementation.

The backend is chosen once at import time; set ``ACCTRISK_DISABLE_NUMBA=1``
to force the numpy path. ``benchmarks/bench_split_kernels.py`` times the
two against each other.

Conventions shared by both backends:

* missing feature values are NaN; every accepted split records whether
  NaN rows follow the left or the right child,
* thresholds sit at midpoints of consecutive distinct sorted values
  (bumped up to the next value if rounding collapses the midpoint),
* ties break toward the lowest candidate column, then the lowest
  threshold, then routing missing rows left.
"""

from __future__ import annotations

import os

import numpy as np

# Splits with a criterion improvement at or below this are rejected.
GAIN_EPS = 1e-12


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


_use_numba = not _env_flag("ACCTRISK_DISABLE_NUMBA")
if _use_numba:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _use_numba = False

if not _use_numba:

    def njit(*args, **kwargs):  # noqa: D103 - identity decorator stand-in
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


NUMBA_ENABLED = _use_numba


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# classification split (weighted Gini decrease)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _class_split_loop(X, y, w, rows, cand, min_leaf):
    n = rows.shape[0]
    w_tot = 0.0
    wy_tot = 0.0
    for k in range(n):
        w_tot += w[rows[k]]
        wy_tot += w[rows[k]] * y[rows[k]]
    if w_tot <= 0.0 or wy_tot <= 0.0 or wy_tot >= w_tot:
        return False, -1, np.nan, 0.0, True
    h_parent = 2.0 * wy_tot * (w_tot - wy_tot) / w_tot

    best_gain = GAIN_EPS
    best_col = -1
    best_thr = np.nan
    best_mleft = True
    found = False

    xs = np.empty(n, np.float64)
    ws = np.empty(n, np.float64)
    wy = np.empty(n, np.float64)
    for ci in range(cand.shape[0]):
        c = cand[ci]
        nf = 0
        miss_w = 0.0
        miss_wy = 0.0
        miss_n = 0
        for k in range(n):
            v = X[rows[k], c]
            if np.isnan(v):
                miss_w += w[rows[k]]
                miss_wy += w[rows[k]] * y[rows[k]]
                miss_n += 1
            else:
                xs[nf] = v
                ws[nf] = w[rows[k]]
                wy[nf] = w[rows[k]] * y[rows[k]]
                nf += 1
        if nf < 2:
            continue
        order = np.argsort(xs[:nf], kind="mergesort")
        xv = xs[:nf][order]
        wv = ws[:nf][order]
        wyv = wy[:nf][order]

        cw = 0.0
        cwy = 0.0
        for j in range(nf - 1):
            cw += wv[j]
            cwy += wyv[j]
            if xv[j + 1] <= xv[j]:
                continue
            thr = 0.5 * (xv[j] + xv[j + 1])
            if thr <= xv[j]:
                thr = xv[j + 1]
            n_lf = j + 1
            n_rf = nf - n_lf

            # missing -> left
            g_left = -1.0
            wl = cw + miss_w
            wyl = cwy + miss_wy
            wr = w_tot - wl
            wyr = wy_tot - wyl
            if n_lf + miss_n >= min_leaf and n_rf >= min_leaf and wl > 0.0 and wr > 0.0:
                hl = 2.0 * wyl * (wl - wyl) / wl
                hr = 2.0 * wyr * (wr - wyr) / wr
                g_left = (h_parent - hl - hr) / w_tot

            # missing -> right
            g_right = -1.0
            wl2 = cw
            wyl2 = cwy
            wr2 = w_tot - wl2
            wyr2 = wy_tot - wyl2
            if n_lf >= min_leaf and n_rf + miss_n >= min_leaf and wl2 > 0.0 and wr2 > 0.0:
                hl2 = 2.0 * wyl2 * (wl2 - wyl2) / wl2
                hr2 = 2.0 * wyr2 * (wr2 - wyr2) / wr2
                g_right = (h_parent - hl2 - hr2) / w_tot

            if g_left >= g_right:
                g = g_left
                mleft = True
            else:
                g = g_right
                mleft = False
            if g > best_gain:
                best_gain = g
                best_col = c
                best_thr = thr
                best_mleft = mleft
                found = True
    if not found:
        return False, -1, np.nan, 0.0, True
    return True, best_col, best_thr, best_gain, best_mleft


def _class_split_numpy(X, y, w, rows, cand, min_leaf):
    yv = y[rows]
    wv = w[rows]
    w_tot = float(wv.sum())
    wy_tot = float((wv * yv).sum())
    if w_tot <= 0.0 or wy_tot <= 0.0 or wy_tot >= w_tot:
        return False, -1, np.nan, 0.0, True
    h_parent = 2.0 * wy_tot * (w_tot - wy_tot) / w_tot

    best_gain = GAIN_EPS
    best_col = -1
    best_thr = np.nan
    best_mleft = True
    found = False

    for c in cand:
        col = X[rows, c]
        miss = np.isnan(col)
        fin = ~miss
        nf = int(fin.sum())
        if nf < 2:
            continue
        xv = col[fin]
        wf = wv[fin]
        wyf = wf * yv[fin]
        order = np.argsort(xv, kind="mergesort")
        xv = xv[order]
        wf = wf[order]
        wyf = wyf[order]

        boundary = xv[1:] > xv[:-1]
        if not boundary.any():
            continue
        thr = 0.5 * (xv[:-1] + xv[1:])
        thr = np.where(thr <= xv[:-1], xv[1:], thr)
        cw = np.cumsum(wf)[:-1]
        cwy = np.cumsum(wyf)[:-1]
        miss_w = float(wv[miss].sum())
        miss_wy = float((wv[miss] * yv[miss]).sum())
        miss_n = int(miss.sum())
        n_lf = np.arange(1, nf)
        n_rf = nf - n_lf

        def _gain(wl, wyl, ok):
            wr = w_tot - wl
            wyr = wy_tot - wyl
            ok = ok & (wl > 0.0) & (wr > 0.0)
            hl = np.zeros_like(wl)
            hr = np.zeros_like(wl)
            np.divide(2.0 * wyl * (wl - wyl), wl, out=hl, where=ok)
            np.divide(2.0 * wyr * (wr - wyr), wr, out=hr, where=ok)
            g = np.full(wl.shape, -1.0)
            g[ok] = (h_parent - hl[ok] - hr[ok]) / w_tot
            return g

        ok_l = boundary & (n_lf + miss_n >= min_leaf) & (n_rf >= min_leaf)
        ok_r = boundary & (n_lf >= min_leaf) & (n_rf + miss_n >= min_leaf)
        g_left = _gain(cw + miss_w, cwy + miss_wy, ok_l)
        g_right = _gain(cw.copy(), cwy.copy(), ok_r)
        mleft = g_left >= g_right
        g = np.where(mleft, g_left, g_right)
        j = int(np.argmax(g))
        if g[j] > best_gain:
            best_gain = float(g[j])
            best_col = int(c)
            best_thr = float(thr[j])
            best_mleft = bool(mleft[j])
            found = True
    if not found:
        return False, -1, np.nan, 0.0, True
    return True, best_col, best_thr, best_gain, best_mleft


# ---------------------------------------------------------------------------
# regression split (sum-of-squares reduction on gradient targets)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _reg_split_loop(X, z, h, rows, cand, min_leaf, min_child_h):
    n = rows.shape[0]
    if n < 2:
        return False, -1, np.nan, 0.0, True
    g_tot = 0.0
    h_tot = 0.0
    for k in range(n):
        g_tot += z[rows[k]]
        h_tot += h[rows[k]]
    parent = g_tot * g_tot / n

    best_gain = GAIN_EPS
    best_col = -1
    best_thr = np.nan
    best_mleft = True
    found = False

    xs = np.empty(n, np.float64)
    zs = np.empty(n, np.float64)
    hs = np.empty(n, np.float64)
    for ci in range(cand.shape[0]):
        c = cand[ci]
        nf = 0
        miss_g = 0.0
        miss_h = 0.0
        miss_n = 0
        for k in range(n):
            v = X[rows[k], c]
            if np.isnan(v):
                miss_g += z[rows[k]]
                miss_h += h[rows[k]]
                miss_n += 1
            else:
                xs[nf] = v
                zs[nf] = z[rows[k]]
                hs[nf] = h[rows[k]]
                nf += 1
        if nf < 2:
            continue
        order = np.argsort(xs[:nf], kind="mergesort")
        xv = xs[:nf][order]
        zv = zs[:nf][order]
        hv = hs[:nf][order]

        cg = 0.0
        ch = 0.0
        for j in range(nf - 1):
            cg += zv[j]
            ch += hv[j]
            if xv[j + 1] <= xv[j]:
                continue
            thr = 0.5 * (xv[j] + xv[j + 1])
            if thr <= xv[j]:
                thr = xv[j + 1]
            n_lf = j + 1
            n_rf = nf - n_lf

            g_left = -1.0
            nl = n_lf + miss_n
            nr = n_rf
            gl = cg + miss_g
            hl = ch + miss_h
            if nl >= min_leaf and nr >= min_leaf and hl >= min_child_h and h_tot - hl >= min_child_h:
                gr_ = g_tot - gl
                g_left = gl * gl / nl + gr_ * gr_ / nr - parent

            g_right = -1.0
            nl2 = n_lf
            nr2 = n_rf + miss_n
            gl2 = cg
            hl2 = ch
            if nl2 >= min_leaf and nr2 >= min_leaf and hl2 >= min_child_h and h_tot - hl2 >= min_child_h:
                gr2 = g_tot - gl2
                g_right = gl2 * gl2 / nl2 + gr2 * gr2 / nr2 - parent

            if g_left >= g_right:
                g = g_left
                mleft = True
            else:
                g = g_right
                mleft = False
            if g > best_gain:
                best_gain = g
                best_col = c
                best_thr = thr
                best_mleft = mleft
                found = True
    if not found:
        return False, -1, np.nan, 0.0, True
    return True, best_col, best_thr, best_gain, best_mleft


def _reg_split_numpy(X, z, h, rows, cand, min_leaf, min_child_h):
    n = rows.shape[0]
    if n < 2:
        return False, -1, np.nan, 0.0, True
    zv_all = z[rows]
    hv_all = h[rows]
    g_tot = float(zv_all.sum())
    h_tot = float(hv_all.sum())
    parent = g_tot * g_tot / n

    best_gain = GAIN_EPS
    best_col = -1
    best_thr = np.nan
    best_mleft = True
    found = False

    for c in cand:
        col = X[rows, c]
        miss = np.isnan(col)
        fin = ~miss
        nf = int(fin.sum())
        if nf < 2:
            continue
        xv = col[fin]
        zz = zv_all[fin]
        hh = hv_all[fin]
        order = np.argsort(xv, kind="mergesort")
        xv = xv[order]
        zz = zz[order]
        hh = hh[order]

        boundary = xv[1:] > xv[:-1]
        if not boundary.any():
            continue
        thr = 0.5 * (xv[:-1] + xv[1:])
        thr = np.where(thr <= xv[:-1], xv[1:], thr)
        cg = np.cumsum(zz)[:-1]
        ch = np.cumsum(hh)[:-1]
        miss_g = float(zv_all[miss].sum())
        miss_h = float(hv_all[miss].sum())
        miss_n = int(miss.sum())
        n_lf = np.arange(1, nf)
        n_rf = nf - n_lf

        def _gain(gl, hl, nl, nr, ok):
            ok = ok & (hl >= min_child_h) & (h_tot - hl >= min_child_h)
            g = np.full(gl.shape, -1.0)
            gr_ = g_tot - gl
            g[ok] = gl[ok] * gl[ok] / nl[ok] + gr_[ok] * gr_[ok] / nr[ok] - parent
            return g

        ok_l = boundary & (n_lf + miss_n >= min_leaf) & (n_rf >= min_leaf)
        ok_r = boundary & (n_lf >= min_leaf) & (n_rf + miss_n >= min_leaf)
        g_left = _gain(cg + miss_g, ch + miss_h, n_lf + miss_n, n_rf, ok_l)
        g_right = _gain(cg.copy(), ch.copy(), n_lf, n_rf + miss_n, ok_r)
        mleft = g_left >= g_right
        g = np.where(mleft, g_left, g_right)
        j = int(np.argmax(g))
        if g[j] > best_gain:
            best_gain = float(g[j])
            best_col = int(c)
            best_thr = float(thr[j])
            best_mleft = bool(mleft[j])
            found = True
    if not found:
        return False, -1, np.nan, 0.0, True
    return True, best_col, best_thr, best_gain, best_mleft


# ---------------------------------------------------------------------------
# tree traversal
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _traverse_loop(feature, threshold, missing_left, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n, np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            if np.isnan(v):
                if missing_left[node]:
                    node = left[node]
                else:
                    node = right[node]
            elif v < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _traverse_numpy(feature, threshold, missing_left, left, right, value, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        nd = node[idx]
        f = feature[nd]
        v = X[idx, f]
        go_left = np.where(np.isnan(v), missing_left[nd], v < threshold[nd])
        node[idx] = np.where(go_left, left[nd], right[nd])
        active[idx] = feature[node[idx]] >= 0
    return value[node]


# ---------------------------------------------------------------------------
# lasso coordinate-descent sweep on a weighted working response
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _cd_sweep_loop(Xs, wts, r, beta, lam, xsq_w):
    n, p = Xs.shape
    maxd = 0.0
    for j in range(p):
        if xsq_w[j] <= 0.0:
            continue
        rho = 0.0
        for i in range(n):
            rho += wts[i] * Xs[i, j] * r[i]
        rho = rho / n + xsq_w[j] * beta[j]
        if rho > lam:
            bnew = (rho - lam) / xsq_w[j]
        elif rho < -lam:
            bnew = (rho + lam) / xsq_w[j]
        else:
            bnew = 0.0
        d = bnew - beta[j]
        if d != 0.0:
            for i in range(n):
                r[i] -= d * Xs[i, j]
            beta[j] = bnew
            ad = abs(d)
            if ad > maxd:
                maxd = ad
    return maxd


def _cd_sweep_numpy(Xs, wts, r, beta, lam, xsq_w):
    n, p = Xs.shape
    maxd = 0.0
    for j in range(p):
        if xsq_w[j] <= 0.0:
            continue
        rho = float((wts * Xs[:, j] * r).sum()) / n + xsq_w[j] * beta[j]
        if rho > lam:
            bnew = (rho - lam) / xsq_w[j]
        elif rho < -lam:
            bnew = (rho + lam) / xsq_w[j]
        else:
            bnew = 0.0
        d = bnew - beta[j]
        if d != 0.0:
            r -= d * Xs[:, j]
            beta[j] = bnew
            maxd = max(maxd, abs(d))
    return maxd


if NUMBA_ENABLED:
    best_split_classification = _class_split_loop
    best_split_regression = _reg_split_loop
    traverse_tree = _traverse_loop
    cd_sweep = _cd_sweep_loop
else:
    best_split_classification = _class_split_numpy
    best_split_regression = _reg_split_numpy
    traverse_tree = _traverse_numpy
    cd_sweep = _cd_sweep_numpy
