"""Compiled inner loops.

Everything in here works on flat numpy arrays so that the public modules can
keep plain dataclasses around them.  Coordinates follow the image layout:
``x`` is the column index, ``y`` the row index, pixel centres sit on integer
coordinates and the bilinear interpolation lives on ``[0, W-1] x [0, H-1]``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# Offset used to push border pixel centres off the frame polygon when testing
# inclusion.  Qedgel crossings are never this close to a pixel centre (see
# VERTEX_NUDGE).
_BORDER_NUDGE = 1e-7


# ----------------------------------------------------------------------
# Level line tracing
# ----------------------------------------------------------------------
@njit(cache=True)
def _orient(nxt, has_pred, entry_cell, ea, eb, xa, ya, xb, yb, cx, cy, corner_above, cell):
    # upper level set on the left of the travel direction
    s = (xb - xa) * (cy - ya) - (yb - ya) * (cx - xa)
    if (s > 0.0) == corner_above:
        nxt[ea] = eb
        has_pred[eb] = True
        entry_cell[ea] = cell
    else:
        nxt[eb] = ea
        has_pred[ea] = True
        entry_cell[eb] = cell


# A sample equal to the level belongs to the upper set; its crossing is
# moved off the pixel centre, towards the lower side, so that the centre
# lies strictly inside the upper region.  Must exceed _BORDER_NUDGE, the
# inset at which frame pixels are probed when painting.
VERTEX_NUDGE = 1e-6


@njit(cache=True)
def _crossing_t(a, b, lam):
    t = (lam - a) / (b - a)
    return min(max(t, VERTEX_NUDGE), 1.0 - VERTEX_NUDGE)


@njit(cache=True)
def trace_level(u, lam):
    """Trace the iso-contours of the bilinear interpolation of ``u`` at ``lam``.

    Returns crossing coordinates in traversal order, the dual cell of the
    chord leaving each crossing, piece offsets and a flag telling whether a
    piece is an open arc (both ends on the frame) or a closed loop.
    """
    H, W = u.shape
    nh = H * (W - 1)
    ne = nh + W * (H - 1)
    ex = np.empty(ne)
    ey = np.empty(ne)
    crosses = np.zeros(ne, np.bool_)
    ncross = 0
    for j in range(H):
        for i in range(W - 1):
            a = u[j, i]
            b = u[j, i + 1]
            if (a >= lam) != (b >= lam):
                e = j * (W - 1) + i
                crosses[e] = True
                ex[e] = i + _crossing_t(a, b, lam)
                ey[e] = j
                ncross += 1
    for j in range(H - 1):
        for i in range(W):
            a = u[j, i]
            b = u[j + 1, i]
            if (a >= lam) != (b >= lam):
                e = nh + j * W + i
                crosses[e] = True
                ex[e] = i
                ey[e] = j + _crossing_t(a, b, lam)
                ncross += 1

    nxt = np.full(ne, -1, np.int64)
    has_pred = np.zeros(ne, np.bool_)
    entry_cell = np.full(ne, -1, np.int64)
    edges = np.empty(4, np.int64)
    vals = np.empty(4)
    above = np.empty(4, np.bool_)
    ccx = np.empty(4)
    ccy = np.empty(4)
    for j in range(H - 1):
        for i in range(W - 1):
            vals[0] = u[j, i]
            vals[1] = u[j, i + 1]
            vals[2] = u[j + 1, i + 1]
            vals[3] = u[j + 1, i]
            na = 0
            for k in range(4):
                above[k] = vals[k] >= lam
                if above[k]:
                    na += 1
            if na == 0 or na == 4:
                continue
            cell = j * (W - 1) + i
            edges[0] = j * (W - 1) + i
            edges[1] = nh + j * W + i + 1
            edges[2] = (j + 1) * (W - 1) + i
            edges[3] = nh + j * W + i
            ccx[0] = i
            ccy[0] = j
            ccx[1] = i + 1
            ccy[1] = j
            ccx[2] = i + 1
            ccy[2] = j + 1
            ccx[3] = i
            ccy[3] = j + 1
            if na == 2 and above[0] == above[2]:
                # saddle: compare the level with the saddle value of the
                # bilinear patch
                sv = (vals[0] * vals[2] - vals[1] * vals[3]) / (
                    vals[0] + vals[2] - vals[1] - vals[3])
                connect_above = sv >= lam
                for k in range(4):
                    if above[k] == connect_above:
                        continue
                    ea = edges[(k + 3) % 4]
                    eb = edges[k]
                    _orient(nxt, has_pred, entry_cell, ea, eb, ex[ea], ey[ea],
                            ex[eb], ey[eb], ccx[k], ccy[k], above[k], cell)
            else:
                ka = -1
                kb = -1
                for k in range(4):
                    if above[k] != above[(k + 1) % 4]:
                        if ka < 0:
                            ka = k
                        else:
                            kb = k
                ea = edges[ka]
                eb = edges[kb]
                c = (ka + 1) % 4
                _orient(nxt, has_pred, entry_cell, ea, eb, ex[ea], ey[ea],
                        ex[eb], ey[eb], ccx[c], ccy[c], above[c], cell)

    ox = np.empty(ncross)
    oy = np.empty(ncross)
    ocell = np.empty(ncross, np.int64)
    starts = np.empty(ncross + 1, np.int64)
    is_arc = np.empty(ncross, np.bool_)
    visited = np.zeros(ne, np.bool_)
    pos = 0
    npieces = 0
    for e0 in range(ne):
        if not crosses[e0] or has_pred[e0] or nxt[e0] < 0:
            continue
        starts[npieces] = pos
        is_arc[npieces] = True
        npieces += 1
        e = e0
        last = -1
        while True:
            visited[e] = True
            ox[pos] = ex[e]
            oy[pos] = ey[e]
            if nxt[e] < 0:
                ocell[pos] = last
                pos += 1
                break
            ocell[pos] = entry_cell[e]
            last = entry_cell[e]
            pos += 1
            e = nxt[e]
    for e0 in range(ne):
        if not crosses[e0] or visited[e0]:
            continue
        starts[npieces] = pos
        is_arc[npieces] = False
        npieces += 1
        e = e0
        while True:
            visited[e] = True
            ox[pos] = ex[e]
            oy[pos] = ey[e]
            ocell[pos] = entry_cell[e]
            pos += 1
            e = nxt[e]
            if e == e0 or e < 0:
                break
    starts[npieces] = pos
    return ox[:pos], oy[:pos], ocell[:pos], starts[:npieces + 1], is_arc[:npieces]


@njit(cache=True)
def _perimeter_coord(x, y, X, Y):
    if y == 0.0:
        return x
    if x == X:
        return X + y
    if y == Y:
        return X + Y + (X - x)
    return 2.0 * X + Y + (Y - y)


@njit(cache=True)
def _cross(x1, y1, x2, y2, cx, cy):
    return (x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)


@njit(cache=True)
def close_pieces(ox, oy, ocell, starts, is_arc, W, H):
    """Close open arcs along the frame and measure every piece.

    An arc is closed on the side of the frame that encloses the smaller
    area; that choice keeps all interiors nested or disjoint.  ``inner`` is
    the length inside the image, without the stretch along the frame.
    """
    X = float(W - 1)
    Y = float(H - 1)
    P = 2.0 * (X + Y)
    cxs = np.array([0.0, X, X, 0.0])
    cys = np.array([0.0, 0.0, Y, Y])
    cpos = np.array([0.0, X, X + Y, 2.0 * X + Y])

    npieces = is_arc.shape[0]
    narcs = 0
    for p in range(npieces):
        if is_arc[p]:
            narcs += 1
    total = ox.shape[0] + 4 * narcs
    px = np.empty(total)
    py = np.empty(total)
    pcell = np.empty(total, np.int64)
    pcross = np.empty(total, np.bool_)
    lstarts = np.empty(npieces + 1, np.int64)
    area = np.empty(npieces)
    length = np.empty(npieces)
    inner = np.empty(npieces)
    pos = 0
    fwd = np.empty(4, np.int64)
    bwd = np.empty(4, np.int64)
    for p in range(npieces):
        a0 = starts[p]
        a1 = starts[p + 1]
        lstarts[p] = pos
        acc = 0.0
        ln = 0.0
        # shoelace about the first vertex, so tiny loops keep their sign
        cx = ox[a0]
        cy = oy[a0]
        for q in range(a0, a1):
            px[pos] = ox[q]
            py[pos] = oy[q]
            pcell[pos] = ocell[q]
            pcross[pos] = True
            pos += 1
            if q + 1 < a1:
                acc += _cross(ox[q], oy[q], ox[q + 1], oy[q + 1], cx, cy)
                ln += math.hypot(ox[q + 1] - ox[q], oy[q + 1] - oy[q])
        if not is_arc[p]:
            acc += _cross(ox[a1 - 1], oy[a1 - 1], ox[a0], oy[a0], cx, cy)
            ln += math.hypot(ox[a0] - ox[a1 - 1], oy[a0] - oy[a1 - 1])
            area[p] = 0.5 * acc
            length[p] = ln
            inner[p] = ln
            continue
        inner[p] = ln
        sx = ox[a0]
        sy = oy[a0]
        exx = ox[a1 - 1]
        eyy = oy[a1 - 1]
        s_start = _perimeter_coord(sx, sy, X, Y)
        s_end = _perimeter_coord(exx, eyy, X, Y)
        # corners met going forward (increasing perimeter coordinate) from
        # the arc end back to its start, and going backward
        dfw = (s_start - s_end) % P
        nf = 0
        for k in range(4):
            d = (cpos[k] - s_end) % P
            if d > 0.0 and d < dfw:
                fwd[nf] = k
                nf += 1
        # sort forward corners by distance
        for a in range(nf):
            for b in range(a + 1, nf):
                if (cpos[fwd[b]] - s_end) % P < (cpos[fwd[a]] - s_end) % P:
                    tmp = fwd[a]
                    fwd[a] = fwd[b]
                    fwd[b] = tmp
        nb = 0
        # backward path visits the complementary corners in reverse order
        for t in range(4):
            taken = False
            for a in range(nf):
                if fwd[a] == t:
                    taken = True
            if not taken:
                bwd[nb] = t
                nb += 1
        for a in range(nb):
            for b in range(a + 1, nb):
                if (s_end - cpos[bwd[b]]) % P < (s_end - cpos[bwd[a]]) % P:
                    tmp = bwd[a]
                    bwd[a] = bwd[b]
                    bwd[b] = tmp
        af = acc
        lf = ln
        lx = exx
        ly = eyy
        for a in range(nf):
            k = fwd[a]
            af += _cross(lx, ly, cxs[k], cys[k], cx, cy)
            lf += math.hypot(cxs[k] - lx, cys[k] - ly)
            lx = cxs[k]
            ly = cys[k]
        af += _cross(lx, ly, sx, sy, cx, cy)
        lf += math.hypot(sx - lx, sy - ly)
        ab = acc
        lb = ln
        lx = exx
        ly = eyy
        for a in range(nb):
            k = bwd[a]
            ab += _cross(lx, ly, cxs[k], cys[k], cx, cy)
            lb += math.hypot(cxs[k] - lx, cys[k] - ly)
            lx = cxs[k]
            ly = cys[k]
        ab += _cross(lx, ly, sx, sy, cx, cy)
        lb += math.hypot(sx - lx, sy - ly)
        if abs(af) <= abs(ab):
            for a in range(nf):
                px[pos] = cxs[fwd[a]]
                py[pos] = cys[fwd[a]]
                pcell[pos] = -1
                pcross[pos] = False
                pos += 1
            area[p] = 0.5 * af
            length[p] = lf
        else:
            for a in range(nb):
                px[pos] = cxs[bwd[a]]
                py[pos] = cys[bwd[a]]
                pcell[pos] = -1
                pcross[pos] = False
                pos += 1
            area[p] = 0.5 * ab
            length[p] = lb
    lstarts[npieces] = pos
    return px[:pos], py[:pos], pcell[:pos], pcross[:pos], lstarts, area, length, inner


# ----------------------------------------------------------------------
# Inclusion tree by scanline painting
# ----------------------------------------------------------------------
@njit(cache=True)
def paint_parents(px, py, starts, order, W, H):
    """Paint line interiors from the largest to the smallest.

    Just before a line is painted, the owner of any pixel centre inside it is
    the smallest already painted line containing it, that is, its parent.
    ``parent`` is -1 for lines hanging from the frame and -2 when a line
    encloses no pixel centre.  ``conflicts`` counts pixels whose owner
    disagreed with the first one seen inside the same line, which only
    happens when polylines cross.
    """
    nlines = starts.shape[0] - 1
    owner = np.full(H * W, -1, np.int64)
    parent = np.full(nlines, -2, np.int64)
    conflicts = 0
    rowcount = np.zeros(H + 1, np.int64)
    xcol = np.empty(W)
    for i in range(W):
        xcol[i] = float(i)
    xcol[0] = _BORDER_NUDGE
    xcol[W - 1] = W - 1 - _BORDER_NUDGE
    yrow = np.empty(H)
    for j in range(H):
        yrow[j] = float(j)
    yrow[0] = _BORDER_NUDGE
    yrow[H - 1] = H - 1 - _BORDER_NUDGE

    for idx in range(nlines):
        L = order[idx]
        a0 = starts[L]
        a1 = starts[L + 1]
        m = a1 - a0
        ymin = 1e300
        ymax = -1e300
        for q in range(a0, a1):
            if py[q] < ymin:
                ymin = py[q]
            if py[q] > ymax:
                ymax = py[q]
        j0 = max(0, int(math.floor(ymin)))
        j1 = min(H - 1, int(math.ceil(ymax)))
        nrows = j1 - j0 + 1
        for r in range(nrows + 1):
            rowcount[r] = 0
        for q in range(m):
            y1 = py[a0 + q]
            y2 = py[a0 + (q + 1) % m]
            ja = max(j0, int(math.floor(min(y1, y2))))
            jb = min(j1, int(math.ceil(max(y1, y2))))
            for j in range(ja, jb + 1):
                yt = yrow[j]
                if (y1 > yt) != (y2 > yt):
                    rowcount[j - j0 + 1] += 1
        for r in range(nrows):
            rowcount[r + 1] += rowcount[r]
        xs = np.empty(rowcount[nrows])
        fill = rowcount[:nrows].copy()
        for q in range(m):
            x1 = px[a0 + q]
            y1 = py[a0 + q]
            x2 = px[a0 + (q + 1) % m]
            y2 = py[a0 + (q + 1) % m]
            ja = max(j0, int(math.floor(min(y1, y2))))
            jb = min(j1, int(math.ceil(max(y1, y2))))
            for j in range(ja, jb + 1):
                yt = yrow[j]
                if (y1 > yt) != (y2 > yt):
                    xs[fill[j - j0]] = x1 + (yt - y1) * (x2 - x1) / (y2 - y1)
                    fill[j - j0] += 1
        found = False
        for r in range(nrows):
            seg = xs[rowcount[r]:rowcount[r + 1]]
            seg.sort()
            j = j0 + r
            for t in range(0, seg.shape[0] - 1, 2):
                xa = seg[t]
                xb = seg[t + 1]
                i0 = max(0, int(math.floor(xa)))
                i1 = min(W - 1, int(math.ceil(xb)))
                for i in range(i0, i1 + 1):
                    xt = xcol[i]
                    if xt > xa and xt < xb:
                        pix = j * W + i
                        o = owner[pix]
                        if not found:
                            found = True
                            parent[L] = o
                        elif o != parent[L]:
                            conflicts += 1
                        owner[pix] = L
    return parent, owner, conflicts


# ----------------------------------------------------------------------
# Regularity along closed polylines
# ----------------------------------------------------------------------
@njit(cache=True)
def _point_at(px, py, cum, a0, m, t):
    # point at arc length t (0 <= t < total) on the closed polyline
    lo = 0
    hi = m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cum[mid] <= t:
            lo = mid
        else:
            hi = mid
    q0 = a0 + lo
    q1 = a0 + (lo + 1) % m
    seg = cum[lo + 1] - cum[lo]
    if seg <= 0.0:
        return px[q0], py[q0]
    r = t - cum[lo]
    return (px[q0] + r * ((px[q1] - px[q0]) / seg),
            py[q0] + r * ((py[q1] - py[q0]) / seg))


@njit(cache=True)
def regularity(px, py, starts, sample_index, sample_line, s):
    """R_s at every sample; NaN for samples of lines not longer than 2s."""
    nlines = starts.shape[0] - 1
    out = np.full(sample_index.shape[0], np.nan)
    ns = sample_index.shape[0]
    k = 0
    for L in range(nlines):
        if k >= ns:
            break
        if sample_line[k] != L:
            continue
        a0 = starts[L]
        m = starts[L + 1] - a0
        cum = np.empty(m + 1)
        cum[0] = 0.0
        for q in range(m):
            q1 = a0 + (q + 1) % m
            cum[q + 1] = cum[q] + math.hypot(px[q1] - px[a0 + q], py[q1] - py[a0 + q])
        total = cum[m]
        while k < ns and sample_line[k] == L:
            if total > 2.0 * s:
                q = sample_index[k] - a0
                x0 = px[a0 + q]
                y0 = py[a0 + q]
                tf = (cum[q] + s) % total
                tb = (cum[q] - s) % total
                xf, yf = _point_at(px, py, cum, a0, m, tf)
                xb, yb = _point_at(px, py, cum, a0, m, tb)
                d = max(math.hypot(xf - x0, yf - y0), math.hypot(xb - x0, yb - y0))
                out[k] = min(d / s, 1.0)
            k += 1
    return out


# ----------------------------------------------------------------------
# Regularized incomplete beta function, natural log
# ----------------------------------------------------------------------
_FPMIN = 1e-300
_CF_EPS = 1e-16
_CF_MAXIT = 100000


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


@njit(cache=True)
def _log_front(a, b, x):
    # log of x^a (1-x)^b / (a B(a, b))
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return a * math.log(x) + b * math.log1p(-x) - lbeta - math.log(a)


@njit(cache=True)
def log_betainc(a, b, x):
    """Natural log of the regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return -np.inf
    if x >= 1.0:
        return 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        return _log_front(a, b, x) + math.log(_betacf(a, b, x))
    # complement is small; I = 1 - I_{1-x}(b, a)
    lc = _log_front(b, a, 1.0 - x) + math.log(_betacf(b, a, 1.0 - x))
    return math.log1p(-math.exp(lc))


@njit(cache=True)
def log10_binomial_tail_interp(n, k, p):
    """log10 of I(p; k, n - k + 1); a zero count gives log10(1)."""
    if k <= 0.0:
        return 0.0
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return 0.0
    return log_betainc(k, n - k + 1.0, p) / math.log(10.0)


@njit(cache=True)
def log10_binomial_tail_interp_many(n, k, p):
    out = np.empty(n.shape[0])
    for i in range(n.shape[0]):
        out[i] = log10_binomial_tail_interp(n[i], k[i], p[i])
    return out
