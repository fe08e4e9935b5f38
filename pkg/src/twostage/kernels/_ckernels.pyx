# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, isfinite, NAN, INFINITY, fabs

cnp.import_array()


cdef inline void _project(double p, double q, double lo, double hi, double s,
                          double* po, double* qo) noexcept nogil:
    cdef double pc = p, r, pr, qr, h, qe, d, best = INFINITY
    cdef double bp = NAN, bq = NAN, pe
    cdef int k
    if pc < lo:
        pc = lo
    if pc > hi:
        pc = hi
    if pc * pc + q * q <= s * s:
        po[0] = pc
        qo[0] = q
        return
    r = hypot(p, q)
    if r > 0.0:
        pr = p * s / r
        qr = q * s / r
        if lo <= pr <= hi:
            best = (pr - p) * (pr - p) + (qr - q) * (qr - q)
            bp = pr
            bq = qr
    for k in range(2):
        pe = lo if k == 0 else hi
        if fabs(pe) <= s:
            h = sqrt(s * s - pe * pe)
            qe = q
            if qe < -h:
                qe = -h
            if qe > h:
                qe = h
            d = (pe - p) * (pe - p) + (qe - q) * (qe - q)
            if d < best:
                best = d
                bp = pe
                bq = qe
    po[0] = bp
    qo[0] = bq


def project_box_disc(p, q, p_min, p_max, s_max):
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(p_min, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(p_max, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(s_max, dtype=np.float64)
    cdef Py_ssize_t i, n = pv.shape[0]
    out_p = np.empty(n)
    out_q = np.empty(n)
    cdef double[::1] op = out_p
    cdef double[::1] oq = out_q
    for i in range(n):
        _project(pv[i], qv[i], lo[i], hi[i], s[i], &op[i], &oq[i])
    return out_p, out_q


def bfs_sweep(order, parent, r, x, p, q, double v0, double tol, int max_iter):
    cdef long[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef long[::1] par = np.ascontiguousarray(parent, dtype=np.int64)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = par.shape[0], m = od.shape[0], i, j, a
    vr_a = np.full(n, v0)
    vi_a = np.zeros(n)
    cdef double[::1] vr = vr_a
    cdef double[::1] vi = vi_a
    cdef double[::1] cr = np.zeros(n)
    cdef double[::1] ci = np.zeros(n)
    cdef double den, nr, ni, step, d
    cdef int it, status = -1
    with nogil:
        for it in range(1, max_iter + 1):
            for i in range(m):
                j = od[i]
                den = vr[j] * vr[j] + vi[j] * vi[j]
                cr[j] = -(pv[j - 1] * vr[j] + qv[j - 1] * vi[j]) / den
                ci[j] = -(pv[j - 1] * vi[j] - qv[j - 1] * vr[j]) / den
            for i in range(m - 1, -1, -1):
                j = od[i]
                a = par[j]
                if a > 0:
                    cr[a] += cr[j]
                    ci[a] += ci[j]
            step = 0.0
            for i in range(m):
                j = od[i]
                a = par[j]
                nr = vr[a] - (rv[j] * cr[j] - xv[j] * ci[j])
                ni = vi[a] - (rv[j] * ci[j] + xv[j] * cr[j])
                d = hypot(nr - vr[j], ni - vi[j])
                if d > step:
                    step = d
                vr[j] = nr
                vi[j] = ni
                if not (isfinite(nr) and isfinite(ni)) or hypot(nr, ni) < 1e-3:
                    status = -2
                    break
            if status == -2:
                break
            if step < tol:
                status = it
                break
    return vr_a[1:].copy(), vi_a[1:].copy(), status
