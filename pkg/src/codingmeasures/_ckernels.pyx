# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels.py`` (same signatures)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, isfinite, INFINITY, NAN

cnp.import_array()

DEF LIFT_OK = 0
DEF LIFT_CRITICAL = 1
DEF LIFT_DIVERGED = 2


cdef inline bint _fin(double complex z) nogil:
    return isfinite(z.real) and isfinite(z.imag)


cdef inline double _cabs(double complex z) nogil:
    return hypot(z.real, z.imag)


cdef inline double complex _inf() nogil:
    cdef double complex z
    z.real = INFINITY
    z.imag = 0.0
    return z


cdef inline double complex _interp(double complex ea, double complex eb, double s) nogil:
    cdef bint fa = _fin(ea)
    cdef bint fb = _fin(eb)
    cdef double complex ia, ib, x
    if fa and fb and (_cabs(ea) <= 1.0 or _cabs(eb) <= 1.0):
        return ea + s * (eb - ea)
    ia = 1.0 / ea if (fa and ea != 0) else 0j
    ib = 1.0 / eb if (fb and eb != 0) else 0j
    x = ia + s * (ib - ia)
    if x == 0:
        return _inf()
    return 1.0 / x


cdef int _try_step(const double complex[::1] pa, const double complex[::1] qa,
                   const double complex[::1] pb, const double complex[::1] qb,
                   double crit, double complex w0, double complex eta,
                   int max_newton, double complex* w_out) nogil:
    cdef bint chart_a
    cdef double complex v, ieta = 0, p, dp, q, dq, g, dg, dv
    cdef const double complex[::1] pc
    cdef const double complex[::1] qc
    cdef int mode, k, i, nc
    cdef double d1 = 0.0, prev = 0.0, a
    cdef bint converged = False
    if _fin(w0) and _cabs(w0) <= 1.0:
        chart_a = True
        v = w0
        pc = pa
        qc = qa
    else:
        chart_a = False
        v = 0j if not _fin(w0) else 1.0 / w0
        pc = pb
        qc = qb
    if _fin(eta):
        if _cabs(eta) <= 1.0:
            mode = 0
        else:
            mode = 1
            ieta = 1.0 / eta
    else:
        mode = 2
    nc = pc.shape[0]
    for k in range(max_newton):
        p = 0
        dp = 0
        q = 0
        dq = 0
        for i in range(nc - 1, -1, -1):
            dp = dp * v + p
            p = p * v + pc[i]
            dq = dq * v + q
            q = q * v + qc[i]
        if mode == 0:
            g = p - eta * q
            dg = dp - eta * dq
        elif mode == 1:
            g = q - p * ieta
            dg = dq - dp * ieta
        else:
            g = q
            dg = dq
        if _cabs(dg) <= crit:
            w_out[0] = w0
            return LIFT_CRITICAL
        dv = g / dg
        a = _cabs(dv)
        if k == 1 and d1 > 1e-12 * (1.0 + _cabs(v)) and a > 0.25 * d1:
            w_out[0] = w0
            return LIFT_DIVERGED
        if k >= 2 and prev > 1e-13 * (1.0 + _cabs(v)) and a > 0.5 * prev:
            w_out[0] = w0
            return LIFT_DIVERGED
        v = v - dv
        if k == 0:
            d1 = a
        prev = a
        if a <= 1e-14 * (1.0 + _cabs(v)):
            converged = True
            break
    if not converged:
        w_out[0] = w0
        return LIFT_DIVERGED
    if chart_a:
        w_out[0] = v
    elif v == 0:
        w_out[0] = _inf()
    else:
        w_out[0] = 1.0 / v
    return LIFT_OK


cdef int _lift_segment(const double complex[::1] pa, const double complex[::1] qa,
                       const double complex[::1] pb, const double complex[::1] qb,
                       double crit, double complex w0, double complex ea, double complex eb,
                       double step_min, int max_newton, double complex* w_out) nogil:
    cdef double s = 0.0, h = 1.0
    cdef double complex w = w0, target, w_new
    cdef bint final
    cdef int code
    while True:
        final = 1.0 - s <= h
        if final:
            target = eb
        else:
            target = _interp(ea, eb, s + h)
        code = _try_step(pa, qa, pb, qb, crit, w, target, max_newton, &w_new)
        if code == LIFT_CRITICAL:
            w_out[0] = w
            return LIFT_CRITICAL
        if code == LIFT_OK:
            w = w_new
            if final:
                w_out[0] = w
                return LIFT_OK
            s += h
            h *= 2.0
        else:
            h *= 0.5
            if h < step_min:
                w_out[0] = w
                return LIFT_DIVERGED


def lift_batch(pa, qa, pb, qb, double crit, eta, starts, double step_min, int max_newton):
    cdef const double complex[::1] cpa = np.ascontiguousarray(pa, dtype=np.complex128)
    cdef const double complex[::1] cqa = np.ascontiguousarray(qa, dtype=np.complex128)
    cdef const double complex[::1] cpb = np.ascontiguousarray(pb, dtype=np.complex128)
    cdef const double complex[::1] cqb = np.ascontiguousarray(qb, dtype=np.complex128)
    cdef const double complex[:, ::1] ceta = np.ascontiguousarray(eta, dtype=np.complex128)
    cdef const double complex[::1] cst = np.ascontiguousarray(starts, dtype=np.complex128)
    cdef Py_ssize_t nrows = ceta.shape[0], ncols = ceta.shape[1], i, j
    out_arr = np.full((nrows, ncols), complex(np.nan, np.nan), dtype=np.complex128)
    status_arr = np.zeros(nrows, dtype=np.int8)
    cdef double complex[:, ::1] out = out_arr
    cdef signed char[::1] status = status_arr
    cdef double complex w
    cdef int code
    with nogil:
        for i in range(nrows):
            w = cst[i]
            if ncols > 0:
                out[i, 0] = w
            for j in range(1, ncols):
                code = _lift_segment(cpa, cqa, cpb, cqb, crit, w, ceta[i, j - 1], ceta[i, j],
                                     step_min, max_newton, &w)
                if code != LIFT_OK:
                    status[i] = code
                    break
                out[i, j] = w
    return out_arr, status_arr


cdef inline double _chordal(double complex a, double complex b) nogil:
    cdef bint fa = _fin(a), fb = _fin(b)
    cdef double aa, ab
    if not fa and not fb:
        return 0.0
    if not fa:
        ab = _cabs(b)
        return 2.0 / sqrt(1.0 + ab * ab)
    if not fb:
        aa = _cabs(a)
        return 2.0 / sqrt(1.0 + aa * aa)
    aa = _cabs(a)
    ab = _cabs(b)
    if aa > 1.0 and ab > 1.0:
        a = 1.0 / a
        b = 1.0 / b
        aa = _cabs(a)
        ab = _cabs(b)
    return 2.0 * _cabs(a - b) / sqrt((1.0 + aa * aa) * (1.0 + ab * ab))


def path_diameters(paths):
    cdef const double complex[:, ::1] P = np.ascontiguousarray(paths, dtype=np.complex128)
    cdef Py_ssize_t R = P.shape[0], L = P.shape[1], i, j, l
    out_arr = np.zeros(R)
    cdef double[::1] out = out_arr
    cdef double best, d
    with nogil:
        for i in range(R):
            best = 0.0
            for j in range(L):
                for l in range(j + 1, L):
                    d = _chordal(P[i, j], P[i, l])
                    if d > best:
                        best = d
            out[i] = best
    return out_arr


def bowen_counts(orbits, refs, double r):
    cdef const double complex[:, ::1] O = np.ascontiguousarray(orbits, dtype=np.complex128)
    cdef const long long[::1] rf = np.ascontiguousarray(refs, dtype=np.int64)
    cdef Py_ssize_t S = O.shape[0], n = O.shape[1], R = rf.shape[0], i, s, j
    counts_arr = np.zeros((R, n), dtype=np.int64)
    cdef long long[:, ::1] counts = counts_arr
    cdef double dmax, d
    cdef long long ref
    with nogil:
        for i in range(R):
            ref = rf[i]
            for s in range(S):
                if s == ref:
                    continue
                dmax = 0.0
                for j in range(n):
                    d = _chordal(O[s, j], O[ref, j])
                    if d > dmax:
                        dmax = d
                    if dmax > r:
                        break
                    counts[i, j] += 1
    return counts_arr


cdef inline long long _draw(const double* cdf, Py_ssize_t k, double u) nogil:
    cdef long long b = 0
    cdef Py_ssize_t i
    for i in range(k):
        if u >= cdf[i]:
            b += 1
    if b > k - 1:
        b = k - 1
    return b


def sample_chain(stat_cdf, cond_cdf, int M, int rp, U):
    cdef const double[::1] sc = np.ascontiguousarray(stat_cdf, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(cond_cdf, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t S = u.shape[0], nu = u.shape[1], L = rp + nu - 1, i, j
    cdef long long nstates = 1
    for i in range(rp):
        nstates *= M
    words_arr = np.empty((S, L), dtype=np.int64)
    cdef long long[:, ::1] words = words_arr
    cdef long long state, rem, b
    with nogil:
        for i in range(S):
            state = _draw(&sc[0], nstates, u[i, 0])
            rem = state
            for j in range(rp - 1, -1, -1):
                words[i, j] = rem % M
                rem = rem // M
            for j in range(1, nu):
                b = _draw(&cc[state, 0], M, u[i, j])
                words[i, rp + j - 1] = b
                state = (state * M + b) % nstates
    return words_arr


def markov_birkhoff(stat_cdf, cond_cdf, int M, int rp, table, int m, int n, U):
    cdef const double[::1] sc = np.ascontiguousarray(stat_cdf, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(cond_cdf, dtype=np.float64)
    cdef const double[::1] tb = np.ascontiguousarray(table, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t S = u.shape[0], i, j, pos, count, done
    cdef long long nstates = 1, nwin = 1, state, rem, b, win
    cdef long long first[64]
    for i in range(rp):
        nstates *= M
    for i in range(m):
        nwin *= M
    if rp > 64:
        raise ValueError("chain order too large")
    sums_arr = np.zeros(S)
    cdef double[::1] sums = sums_arr
    cdef double acc
    with nogil:
        for i in range(S):
            state = _draw(&sc[0], nstates, u[i, 0])
            rem = state
            for j in range(rp - 1, -1, -1):
                first[j] = rem % M
                rem = rem // M
            acc = 0.0
            win = 0
            count = 0
            done = 0
            j = 1
            pos = 0
            while done < n:
                if pos < rp:
                    b = first[pos]
                else:
                    b = _draw(&cc[state, 0], M, u[i, j])
                    state = (state * M + b) % nstates
                    j += 1
                pos += 1
                win = (win * M + b) % nwin
                count += 1
                if count >= m:
                    acc = acc + tb[win]
                    done += 1
            sums[i] = acc
    return sums_arr
