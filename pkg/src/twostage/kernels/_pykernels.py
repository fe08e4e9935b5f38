"""Reference implementations of the hot loops (pure Python over numpy
arrays). The compiled module mirrors these line for line."""
from __future__ import annotations

import math

import numpy as np


def project_one(p: float, q: float, lo: float, hi: float, s: float) -> tuple[float, float]:
    pc = min(max(p, lo), hi)
    if pc * pc + q * q <= s * s:
        return pc, q
    best_d = math.inf
    bp = bq = math.nan
    r = math.hypot(p, q)
    if r > 0.0:
        pr, qr = p * s / r, q * s / r
        if lo <= pr <= hi:
            best_d = (pr - p) ** 2 + (qr - q) ** 2
            bp, bq = pr, qr
    for pe in (lo, hi):
        if abs(pe) <= s:
            h = math.sqrt(s * s - pe * pe)
            qe = min(max(q, -h), h)
            d = (pe - p) ** 2 + (qe - q) ** 2
            if d < best_d:
                best_d, bp, bq = d, pe, qe
    return bp, bq


def project_box_disc(p, q, p_min, p_max, s_max):
    """Project every ``(p[i], q[i])`` onto ``[p_min, p_max] x R`` intersected
    with the disc of radius ``s_max``. NaN marks an empty set."""
    n = len(p)
    po = np.empty(n)
    qo = np.empty(n)
    for i in range(n):
        po[i], qo[i] = project_one(float(p[i]), float(q[i]), float(p_min[i]),
                                   float(p_max[i]), float(s_max[i]))
    return po, qo


def bfs_sweep(order, parent, r, x, p, q, v0: float, tol: float, max_iter: int):
    """Backward/forward sweep on a radial feeder.

    ``order`` lists nodes 1..N parents first; ``parent`` and the per-unit
    line data ``r, x`` are indexed by node (the line feeding it). Returns
    ``(v_re, v_im, iterations)`` over nodes 1..N; ``iterations`` is -1 when
    the sweep does not converge and -2 when it collapses.
    """
    n = len(parent)
    vr = [v0] * n
    vi = [0.0] * n
    cr = [0.0] * n
    ci = [0.0] * n
    for it in range(1, max_iter + 1):
        for j in order:
            # draw = conj(-s / V)
            den = vr[j] * vr[j] + vi[j] * vi[j]
            cr[j] = -(p[j - 1] * vr[j] + q[j - 1] * vi[j]) / den
            ci[j] = -(p[j - 1] * vi[j] - q[j - 1] * vr[j]) / den
        for j in reversed(order):
            a = parent[j]
            if a > 0:
                cr[a] += cr[j]
                ci[a] += ci[j]
        step = 0.0
        for j in order:
            a = parent[j]
            nr = vr[a] - (r[j] * cr[j] - x[j] * ci[j])
            ni = vi[a] - (r[j] * ci[j] + x[j] * cr[j])
            step = max(step, math.hypot(nr - vr[j], ni - vi[j]))
            vr[j], vi[j] = nr, ni
            if not (math.isfinite(nr) and math.isfinite(ni)) or math.hypot(nr, ni) < 1e-3:
                return np.array(vr[1:]), np.array(vi[1:]), -2
        if step < tol:
            return np.array(vr[1:]), np.array(vi[1:]), it
    return np.array(vr[1:]), np.array(vi[1:]), -1
