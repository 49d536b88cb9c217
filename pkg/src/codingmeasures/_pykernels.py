"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The compiled module is preferred at import time (see ``kernels.py``); this
module is the fallback and the reference the compiled code is tested against.

Status codes returned by ``lift_batch``: 0 ok, 1 near a critical point,
2 Newton failure after step halving reached ``step_min``.
"""

import numpy as np

LIFT_OK = 0
LIFT_CRITICAL = 1
LIFT_DIVERGED = 2

_INF = complex(np.inf, 0.0)


def _is_finite(z):
    return z.real == z.real and z.imag == z.imag and abs(z.real) != np.inf and abs(z.imag) != np.inf


def _horner2(c, v):
    val = 0j
    der = 0j
    for a in c[::-1]:
        der = der * v + val
        val = val * v + a
    return val, der


def _interp(ea, eb, s):
    fa = _is_finite(ea)
    fb = _is_finite(eb)
    if fa and fb and (abs(ea) <= 1.0 or abs(eb) <= 1.0):
        return ea + s * (eb - ea)
    ia = 1.0 / ea if fa and ea != 0 else 0j
    ib = 1.0 / eb if fb and eb != 0 else 0j
    x = ia + s * (ib - ia)
    if x == 0:
        return _INF
    return 1.0 / x


def _try_step(pa, qa, pb, qb, crit, w0, eta, max_newton):
    """Newton solve of f(w) = eta started at w0, in the chart of w0.

    The first Newton step is the Euler predictor; the ratio test on the
    second step is the Kantorovich-style guard against branch jumping.
    """
    if _is_finite(w0) and abs(w0) <= 1.0:
        chart_a = True
        v = w0
        pc, qc = pa, qa
    else:
        chart_a = False
        v = 0j if not _is_finite(w0) else 1.0 / w0
        pc, qc = pb, qb
    if _is_finite(eta):
        if abs(eta) <= 1.0:
            mode = 0
        else:
            mode = 1
            ieta = 1.0 / eta
    else:
        mode = 2
    d1 = 0.0
    prev = 0.0
    converged = False
    for k in range(max_newton):
        p, dp = _horner2(pc, v)
        q, dq = _horner2(qc, v)
        if mode == 0:
            g = p - eta * q
            dg = dp - eta * dq
        elif mode == 1:
            g = q - p * ieta
            dg = dq - dp * ieta
        else:
            g = q
            dg = dq
        if abs(dg) <= crit:
            return w0, LIFT_CRITICAL
        dv = g / dg
        a = abs(dv)
        if k == 1 and d1 > 1e-12 * (1.0 + abs(v)) and a > 0.25 * d1:
            return w0, LIFT_DIVERGED
        if k >= 2 and prev > 1e-13 * (1.0 + abs(v)) and a > 0.5 * prev:
            return w0, LIFT_DIVERGED
        v = v - dv
        if k == 0:
            d1 = a
        prev = a
        if a <= 1e-14 * (1.0 + abs(v)):
            converged = True
            break
    if not converged:
        return w0, LIFT_DIVERGED
    if chart_a:
        return v, LIFT_OK
    if v == 0:
        return _INF, LIFT_OK
    return 1.0 / v, LIFT_OK


def _lift_segment(pa, qa, pb, qb, crit, w0, ea, eb, step_min, max_newton):
    s = 0.0
    h = 1.0
    w = w0
    while True:
        final = 1.0 - s <= h
        if final:
            target = eb
        else:
            target = _interp(ea, eb, s + h)
        w_new, code = _try_step(pa, qa, pb, qb, crit, w, target, max_newton)
        if code == LIFT_CRITICAL:
            return w, LIFT_CRITICAL
        if code == LIFT_OK:
            w = w_new
            if final:
                return w, LIFT_OK
            s += h
            h *= 2.0
        else:
            h *= 0.5
            if h < step_min:
                return w, LIFT_DIVERGED


def _try_step_vec(pa, qa, pb, qb, crit, w0, eta, max_newton):
    """Row-wise vectorized twin of ``_try_step``."""
    R = w0.shape[0]
    fin_w = np.isfinite(w0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        chart_a = fin_w & (np.abs(w0) <= 1.0)
        v = np.where(chart_a, w0, np.where(fin_w & (w0 != 0), 1.0 / np.where(fin_w & (w0 != 0), w0, 1.0), 0j))
        fin_e = np.isfinite(eta)
        small = fin_e & (np.abs(eta) <= 1.0)
        ieta = np.where(fin_e & ~small, 1.0 / np.where(fin_e & ~small, eta, 1.0), 0j)
    alpha = np.where(small, 1.0 + 0j, -ieta)
    beta = np.where(small, -eta, 1.0 + 0j)
    alpha = np.where(fin_e, alpha, 0j)
    beta = np.where(fin_e, beta, 1.0 + 0j)
    pc = np.where(chart_a[:, None], np.asarray(pa)[None, :], np.asarray(pb)[None, :])
    qc = np.where(chart_a[:, None], np.asarray(qa)[None, :], np.asarray(qb)[None, :])
    status = np.full(R, -1, dtype=np.int8)
    d1 = np.zeros(R)
    prev = np.zeros(R)
    for k in range(max_newton):
        act = status < 0
        if not act.any():
            break
        p = np.zeros(R, dtype=np.complex128)
        dp = np.zeros(R, dtype=np.complex128)
        q = np.zeros(R, dtype=np.complex128)
        dq = np.zeros(R, dtype=np.complex128)
        for i in range(pc.shape[1] - 1, -1, -1):
            dp = dp * v + p
            p = p * v + pc[:, i]
            dq = dq * v + q
            q = q * v + qc[:, i]
        g = alpha * p + beta * q
        dg = alpha * dp + beta * dq
        crit_rows = act & (np.abs(dg) <= crit)
        status[crit_rows] = LIFT_CRITICAL
        act = act & ~crit_rows
        with np.errstate(divide="ignore", invalid="ignore"):
            dv = np.where(act, g / np.where(act, dg, 1.0), 0j)
        a = np.abs(dv)
        scale = 1.0 + np.abs(v)
        if k == 1:
            bad = act & (d1 > 1e-12 * scale) & (a > 0.25 * d1)
            status[bad] = LIFT_DIVERGED
            act = act & ~bad
        elif k >= 2:
            bad = act & (prev > 1e-13 * scale) & (a > 0.5 * prev)
            status[bad] = LIFT_DIVERGED
            act = act & ~bad
        v = np.where(act, v - dv, v)
        if k == 0:
            d1 = np.where(act, a, d1)
        prev = np.where(act, a, prev)
        conv = act & (a <= 1e-14 * (1.0 + np.abs(v)))
        status[conv] = LIFT_OK
    status[status < 0] = LIFT_DIVERGED
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(chart_a, v, np.where(v == 0, complex(np.inf, 0.0), 1.0 / np.where(v == 0, 1.0, v)))
    w = np.where(status == LIFT_OK, w, w0)
    return w, status


def lift_batch(pa, qa, pb, qb, crit, eta, starts, step_min, max_newton):
    """Lift each row of ``eta`` through f starting from ``starts[row]``.

    Returns the lifted samples (same shape as ``eta``) and a per-row status.
    Rows that fail keep NaN from the failing column on.
    """
    pa = np.asarray(pa, dtype=np.complex128)
    qa = np.asarray(qa, dtype=np.complex128)
    pb = np.asarray(pb, dtype=np.complex128)
    qb = np.asarray(qb, dtype=np.complex128)
    lists = ([complex(c) for c in pa], [complex(c) for c in qa],
             [complex(c) for c in pb], [complex(c) for c in qb])
    eta = np.asarray(eta, dtype=np.complex128)
    starts = np.asarray(starts, dtype=np.complex128)
    nrows, ncols = eta.shape
    out = np.full((nrows, ncols), complex(np.nan, np.nan), dtype=np.complex128)
    status = np.zeros(nrows, dtype=np.int8)
    if nrows == 0:
        return out, status
    out[:, 0] = starts
    alive = np.ones(nrows, dtype=bool)
    w = starts.copy()
    for j in range(1, ncols):
        rows = np.nonzero(alive)[0]
        if rows.size == 0:
            break
        w_new, code = _try_step_vec(pa, qa, pb, qb, crit, w[rows], eta[rows, j], max_newton)
        w[rows] = w_new
        crit_rows = rows[code == LIFT_CRITICAL]
        status[crit_rows] = LIFT_CRITICAL
        alive[crit_rows] = False
        for i in rows[code == LIFT_DIVERGED]:
            wi, ci = _lift_segment(*lists, crit, complex(out[i, j - 1]), complex(eta[i, j - 1]),
                                   complex(eta[i, j]), step_min, max_newton)
            if ci != LIFT_OK:
                status[i] = ci
                alive[i] = False
            else:
                w[i] = wi
        out[alive, j] = w[alive]
    return out, status


def _chordal(a, b):
    """Vectorized chordal distance; accepts complex arrays with inf entries."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    a, b = np.broadcast_arrays(a, b)
    ia = ~np.isfinite(a)
    ib = ~np.isfinite(b)
    aa = np.abs(a)
    ab = np.abs(b)
    big = (aa > 1.0) & (ab > 1.0) & ~ia & ~ib
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ra = np.where(big, 1.0 / np.where(big, a, 1.0), a)
        rb = np.where(big, 1.0 / np.where(big, b, 1.0), b)
        num = 2.0 * np.abs(ra - rb)
        den = np.sqrt((1.0 + np.abs(ra) ** 2) * (1.0 + np.abs(rb) ** 2))
        out = num / den
        out = np.where(ia & ~ib, 2.0 / np.sqrt(1.0 + ab ** 2), out)
        out = np.where(ib & ~ia, 2.0 / np.sqrt(1.0 + aa ** 2), out)
        out = np.where(ia & ib, 0.0, out)
    return out


def path_diameters(paths):
    """Chordal diameter (max pairwise sample distance) of each row."""
    paths = np.asarray(paths, dtype=np.complex128)
    out = np.empty(paths.shape[0])
    for i, row in enumerate(paths):
        d = _chordal(row[:, None], row[None, :])
        out[i] = np.nanmax(d) if d.size else 0.0
    return out


def bowen_counts(orbits, refs, r):
    """Counts of cloud points within Bowen distance ``r`` of each reference.

    ``orbits[s, j]`` is the j-th forward image of cloud point s. Entry
    ``[i, j]`` of the result counts points y (other than the reference index
    itself) with max_{l <= j} chordal(f^l x, f^l y) <= r.
    """
    orbits = np.asarray(orbits, dtype=np.complex128)
    refs = np.asarray(refs, dtype=np.int64)
    n = orbits.shape[1]
    counts = np.zeros((len(refs), n), dtype=np.int64)
    for i, ref in enumerate(refs):
        d = _chordal(orbits, orbits[ref][None, :])
        d = np.maximum.accumulate(d, axis=1)
        inside = d <= r
        inside[ref, :] = False
        counts[i] = inside.sum(axis=0)
    return counts


def _draw(cdf_row_block, u):
    # first index b with u < cdf[b]; clipped for cdf rounding below 1
    idx = (u[:, None] >= cdf_row_block).sum(axis=1)
    return np.minimum(idx, cdf_row_block.shape[1] - 1)


def sample_chain(stat_cdf, cond_cdf, M, rp, U):
    """Sample symbol sequences from a stationary order-``rp`` chain.

    ``U`` holds one uniform per row for the initial ``rp``-word and one per
    further symbol; the result has ``rp + U.shape[1] - 1`` columns.
    """
    U = np.asarray(U, dtype=np.float64)
    stat_cdf = np.asarray(stat_cdf, dtype=np.float64)
    cond_cdf = np.asarray(cond_cdf, dtype=np.float64)
    S, nu = U.shape
    L = rp + nu - 1
    nstates = M ** rp
    words = np.empty((S, L), dtype=np.int64)
    state = _draw(np.broadcast_to(stat_cdf, (S, nstates)), U[:, 0])
    rem = state.copy()
    for i in range(rp - 1, -1, -1):
        words[:, i] = rem % M
        rem //= M
    for j in range(1, nu):
        b = _draw(cond_cdf[state], U[:, j])
        words[:, rp + j - 1] = b
        state = (state * M + b) % nstates
    return words


def markov_birkhoff(stat_cdf, cond_cdf, M, rp, table, m, n, U):
    """Birkhoff sums S_n of a depth-``m`` cylinder observable along sampled paths.

    ``table`` is indexed by the base-M integer of the m-word at each time;
    ``U`` must provide at least ``n + m - 1`` symbols per row.
    """
    U = np.asarray(U, dtype=np.float64)
    table = np.asarray(table, dtype=np.float64)
    stat_cdf = np.asarray(stat_cdf, dtype=np.float64)
    cond_cdf = np.asarray(cond_cdf, dtype=np.float64)
    S, nu = U.shape
    nstates = M ** rp
    nwin = M ** m
    state = _draw(np.broadcast_to(stat_cdf, (S, nstates)), U[:, 0])
    first = np.empty((S, rp), dtype=np.int64)
    rem = state.copy()
    for i in range(rp - 1, -1, -1):
        first[:, i] = rem % M
        rem //= M
    sums = np.zeros(S)
    win = np.zeros(S, dtype=np.int64)
    count = 0
    done = 0
    j = 1
    pos = 0
    while done < n:
        if pos < rp:
            b = first[:, pos]
        else:
            b = _draw(cond_cdf[state], U[:, j])
            state = (state * M + b) % nstates
            j += 1
        pos += 1
        win = (win * M + b) % nwin
        count += 1
        if count >= m:
            sums = sums + table[win]
            done += 1
    return sums
