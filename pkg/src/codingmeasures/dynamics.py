"""Rational maps of the Riemann sphere and products of two of them.

Points of the sphere are complex numbers; the point at infinity is the
canonical value ``complex(inf, 0)``. Points of a product are pairs, stored as
arrays whose last axis has length 2.

Every evaluation is done in homogeneous form: a point is represented by
``(z, 1)`` when ``|z| <= 1`` and by ``(1, 1/z)`` otherwise, so poles and
infinity need no special casing.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._pykernels import _chordal
from .errors import RootFindingError

INF = complex(np.inf, 0.0)
ROOT_TOL = 1e-12
ROOT_SWEEPS = 200
ROOT_RESTARTS = 4
MULTIPLE_TOL = 1e-7
RESULTANT_TOL = 1e-10
CRIT_TOL = 1e-8


def canonical(z):
    """Map every non-finite complex value to the canonical infinity."""
    z = np.asarray(z, dtype=np.complex128)
    return np.where(np.isfinite(z), z, INF)


def chordal_distance(a, b):
    """Chordal distance ``2|a-b| / sqrt((1+|a|^2)(1+|b|^2))`` with limits at infinity.

    Works elementwise on arrays. Use ``product_distance`` for pairs.
    """
    out = _chordal(a, b)
    return float(out) if out.ndim == 0 else out


def product_distance(a, b):
    """Max of the factor chordal distances for points of a product (last axis 2)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    out = np.maximum(_chordal(a[..., 0], b[..., 0]), _chordal(a[..., 1], b[..., 1]))
    return float(out) if out.ndim == 0 else out


def _trim(c, rel=0.0):
    c = np.asarray(c, dtype=np.complex128).ravel()
    if c.size == 0:
        return np.zeros(1, dtype=np.complex128)
    scale = np.abs(c).max()
    k = c.size
    while k > 1 and abs(c[k - 1]) <= rel * scale:
        k -= 1
    return c[:k]


@dataclass(frozen=True)
class ComplexPolynomial:
    """Polynomial with complex coefficients, lowest degree first."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim(self.coeffs)
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return 0 if self.coeffs.size == 1 and self.coeffs[0] == 0 else self.coeffs.size - 1

    def is_zero(self):
        return bool(np.all(self.coeffs == 0))

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def derivative(self):
        return ComplexPolynomial(np.polynomial.polynomial.polyder(self.coeffs))

    def padded(self, n):
        out = np.zeros(n, dtype=np.complex128)
        out[:self.coeffs.size] = self.coeffs
        return out

    def __eq__(self, other):
        return isinstance(other, ComplexPolynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())


def _sylvester(a, b):
    """Sylvester matrix of two polynomials given lowest degree first."""
    m, n = a.size - 1, b.size - 1
    S = np.zeros((m + n, m + n), dtype=np.complex128)
    ah, bh = a[::-1], b[::-1]
    for i in range(n):
        S[i, i:i + m + 1] = ah
    for i in range(m):
        S[n + i, i:i + n + 1] = bh
    return S


def resultant_magnitude(p, q):
    """|Res(p, q)| after scaling each polynomial to unit max coefficient."""
    a = p.coeffs / np.abs(p.coeffs).max()
    b = q.coeffs / np.abs(q.coeffs).max()
    if a.size == 1 or b.size == 1:
        return 1.0
    return float(abs(np.linalg.det(_sylvester(a, b))))


@dataclass(frozen=True, eq=False)
class RationalMap:
    """f = p / q of degree ``d = max(deg p, deg q) >= 2`` with p, q coprime.

    Both polynomials are rescaled together so the largest coefficient has
    modulus 1; this leaves f unchanged and makes tolerances absolute.
    """

    num: ComplexPolynomial
    den: ComplexPolynomial
    degree: int = field(init=False)
    pa: np.ndarray = field(init=False, repr=False)
    qa: np.ndarray = field(init=False, repr=False)
    pb: np.ndarray = field(init=False, repr=False)
    qb: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p, q = self.num, self.den
        if not isinstance(p, ComplexPolynomial):
            p = ComplexPolynomial(p)
        if not isinstance(q, ComplexPolynomial):
            q = ComplexPolynomial(q)
        if q.is_zero() or p.is_zero():
            raise ValueError("numerator and denominator must be nonzero")
        d = max(p.degree, q.degree)
        if d < 2:
            raise ValueError(f"degree must be >= 2 (got {d})")
        if resultant_magnitude(p, q) < RESULTANT_TOL:
            raise ValueError("numerator and denominator share a common root")
        scale = max(np.abs(p.coeffs).max(), np.abs(q.coeffs).max())
        p = ComplexPolynomial(p.coeffs / scale)
        q = ComplexPolynomial(q.coeffs / scale)
        object.__setattr__(self, "num", p)
        object.__setattr__(self, "den", q)
        object.__setattr__(self, "degree", d)
        pa, qa = p.padded(d + 1), q.padded(d + 1)
        for arr in (pa, qa):
            arr.setflags(write=False)
        object.__setattr__(self, "pa", pa)
        object.__setattr__(self, "qa", qa)
        object.__setattr__(self, "pb", pa[::-1].copy())
        object.__setattr__(self, "qb", qa[::-1].copy())

    @classmethod
    def polynomial(cls, coeffs):
        return cls(ComplexPolynomial(coeffs), ComplexPolynomial([1.0]))

    @property
    def dim(self):
        return 1

    @property
    def n_symbols(self):
        return self.degree

    def is_polynomial(self):
        return self.den.degree == 0

    def conjugate_by_inversion(self):
        """The map u -> 1 / f(1/u)."""
        return RationalMap(ComplexPolynomial(self.qb), ComplexPolynomial(self.pb))

    def _charts(self, z):
        """Homogeneous values (P, Q) and chart derivatives at each point."""
        z = canonical(z)
        fin = np.isfinite(z)
        inner = fin & (np.abs(z) <= 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(inner, z, np.where(fin, 1.0 / np.where(fin & ~inner, z, 1.0), 0.0))
        pv = np.polynomial.polynomial
        P = np.where(inner, pv.polyval(v, self.pa), pv.polyval(v, self.pb))
        Q = np.where(inner, pv.polyval(v, self.qa), pv.polyval(v, self.qb))
        dP = np.where(inner, pv.polyval(v, pv.polyder(self.pa)), pv.polyval(v, pv.polyder(self.pb)))
        dQ = np.where(inner, pv.polyval(v, pv.polyder(self.qa)), pv.polyval(v, pv.polyder(self.qb)))
        return v, P, Q, dP, dQ

    def __call__(self, z):
        return evaluate(self, z)


@dataclass(frozen=True, eq=False)
class ProductMap:
    """(z, w) -> (f1(z), f2(w)) with deg f1 = deg f2."""

    f1: RationalMap
    f2: RationalMap

    def __post_init__(self):
        if self.f1.degree != self.f2.degree:
            raise ValueError("product factors must have equal degree")

    @property
    def degree(self):
        return self.f1.degree

    @property
    def dim(self):
        return 2

    @property
    def n_symbols(self):
        return self.f1.degree ** 2

    @property
    def factors(self):
        return (self.f1, self.f2)

    def __call__(self, z):
        return evaluate(self, z)


def evaluate(f, z):
    """f(z) on the sphere (or on the product of two spheres).

    Returns a Python complex for scalar input and an array otherwise.
    """
    if isinstance(f, ProductMap):
        z = np.asarray(z, dtype=np.complex128)
        return np.stack([evaluate(f.f1, z[..., 0]), evaluate(f.f2, z[..., 1])], axis=-1)
    zarr = np.asarray(z, dtype=np.complex128)
    _, P, Q, _, _ = f._charts(zarr)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = canonical(np.where(Q == 0, INF, P / np.where(Q == 0, 1.0, Q)))
    return complex(out) if out.ndim == 0 else out


def spherical_derivative(f, z):
    """|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2), computed in the chart of z.

    The chordal metric is invariant under z -> 1/z, so the same expression
    in the inverted chart gives the value near and at infinity. For a product
    map the result has a trailing axis with the two factor derivatives.
    """
    if isinstance(f, ProductMap):
        z = np.asarray(z, dtype=np.complex128)
        return np.stack([spherical_derivative(f.f1, z[..., 0]),
                         spherical_derivative(f.f2, z[..., 1])], axis=-1)
    zarr = np.asarray(z, dtype=np.complex128)
    v, P, Q, dP, dQ = f._charts(zarr)
    W = dP * Q - P * dQ
    out = np.abs(W) * (1.0 + np.abs(v) ** 2) / (np.abs(P) ** 2 + np.abs(Q) ** 2)
    return float(out) if out.ndim == 0 else out


# -- roots -------------------------------------------------------------------

def _backward_error(c, z):
    absz = np.abs(z)
    num = np.abs(np.polynomial.polynomial.polyval(z, c))
    den = np.polynomial.polynomial.polyval(absz, np.abs(c))
    return num / np.where(den > 0, den, 1.0)


def aberth_roots(coeffs, tol=ROOT_TOL, max_sweeps=ROOT_SWEEPS, restarts=ROOT_RESTARTS):
    """All roots of a polynomial (lowest degree first) by Aberth-Ehrlich iteration.

    Converges when every root has backward error ``|p(z)| / sum |c_i||z|^i``
    below ``tol``. On stagnation the start is perturbed randomly (seeded, so
    the result is deterministic) and the iteration restarts.

    Raises
    ------
    RootFindingError
        If no restart converges.
    """
    c = _trim(coeffs)
    n = c.size - 1
    if n <= 0:
        return np.zeros(0, dtype=np.complex128)
    nz = np.flatnonzero(c)[0]
    if nz > 0:
        # exact roots at 0 are factored out before iterating
        return np.concatenate([np.zeros(nz, dtype=np.complex128),
                               aberth_roots(c[nz:], tol, max_sweeps, restarts)])
    if n == 1:
        return np.array([-c[0] / c[1]])
    pv = np.polynomial.polynomial
    dc = pv.polyder(c)
    mags = np.abs(c[:-1] / c[-1])
    radius = max(np.max(mags ** (1.0 / (n - np.arange(n)))), 1e-300)
    r0 = abs(c[0] / c[-1]) ** (1.0 / n)
    rng = np.random.default_rng(12345)
    base = r0 * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    for attempt in range(restarts + 1):
        z = base if attempt == 0 else base * (1 + 0.3 * rng.standard_normal(n)) \
            * np.exp(1j * rng.uniform(0, 2 * np.pi))
        z = z.astype(np.complex128)
        for _ in range(max_sweeps):
            if np.all(_backward_error(c, z) <= tol):
                return _polish(c, dc, z)
            with np.errstate(all="ignore"):
                ratio = pv.polyval(z, c) / pv.polyval(z, dc)
                diff = z[:, None] - z[None, :]
                np.fill_diagonal(diff, 1.0)
                inv = 1.0 / diff
                np.fill_diagonal(inv, 0.0)
                off = inv.sum(axis=1)
                step = ratio / (1.0 - ratio * off)
            ok = np.isfinite(step)
            z = np.where(ok, z - step, z)
            z = np.where(np.abs(z) > 10 * radius + 1, z / np.abs(z) * radius, z)
        if np.all(_backward_error(c, z) <= tol):
            return _polish(c, dc, z)
    raise RootFindingError(f"Aberth iteration did not converge for degree {n}")


def _polish(c, dc, z, steps=3):
    pv = np.polynomial.polynomial
    err = _backward_error(c, z)
    for _ in range(steps):
        with np.errstate(all="ignore"):
            cand = z - pv.polyval(z, c) / pv.polyval(z, dc)
        cerr = _backward_error(c, cand)
        better = np.isfinite(cand) & (cerr < err)
        z = np.where(better, cand, z)
        err = np.where(better, cerr, err)
    return z


def _flag_multiple(points):
    n = points.size
    if n < 2:
        return False
    d = _chordal(points[:, None], points[None, :])
    d[np.arange(n), np.arange(n)] = np.inf
    return bool(d.min() < MULTIPLE_TOL)


def _projective_roots(c):
    """Roots on the sphere of a degree-<=n form given by n+1 coefficients.

    Solves in the chart where the leading coefficient is larger; lost degree
    becomes roots at infinity (or at 0 in the inverted chart).
    """
    c = np.asarray(c, dtype=np.complex128)
    n = c.size - 1
    if abs(c[-1]) >= abs(c[0]):
        tc = _trim(c, 1e-14)
        r = aberth_roots(tc)
        return np.concatenate([r, np.full(n - (tc.size - 1), INF)])
    rc = _trim(c[::-1], 1e-14)
    u = aberth_roots(rc)
    with np.errstate(divide="ignore"):
        w = np.where(u == 0, INF, 1.0 / np.where(u == 0, 1.0, u))
    return np.concatenate([canonical(w), np.zeros(n - (rc.size - 1), dtype=np.complex128)])


@dataclass(frozen=True)
class Preimages:
    """The d preimages of a point, with the worst residual and a multiplicity flag."""

    points: np.ndarray
    residual: float
    multiple: bool


def _target_form(f, y):
    if not np.isfinite(y):
        return np.asarray(f.qa, dtype=np.complex128)
    if abs(y) <= 1.0:
        return f.pa - y * f.qa
    return f.qa - f.pa / y


def _newton_polish(f, w, y, steps=4):
    """Refine preimages of y in the chart of each point; keeps improvements only."""
    out = np.array(w, dtype=np.complex128)
    for i in range(out.size):
        best = out[i]
        best_res = _chordal(evaluate(f, best), y)
        cur = best
        for _ in range(steps):
            if best_res == 0:
                break
            inner = np.isfinite(cur) and abs(cur) <= 1.0
            v = cur if inner else (0j if not np.isfinite(cur) else 1.0 / cur)
            cp, cq = (f.pa, f.qa) if inner else (f.pb, f.qb)
            pv = np.polynomial.polynomial
            P, Q = pv.polyval(v, cp), pv.polyval(v, cq)
            dP, dQ = pv.polyval(v, pv.polyder(cp)), pv.polyval(v, pv.polyder(cq))
            if not np.isfinite(y):
                g, dg = Q, dQ
            elif abs(y) <= 1:
                g, dg = P - y * Q, dP - y * dQ
            else:
                g, dg = Q - P / y, dQ - dP / y
            if dg == 0:
                break
            v = v - g / dg
            cur = v if inner else (INF if v == 0 else 1.0 / v)
            res = _chordal(evaluate(f, cur), y)
            if res < best_res:
                best, best_res = cur, res
        out[i] = best
    return canonical(out)


def preimages(f, y):
    """All preimages of y counted with multiplicity.

    For a rational map returns d points; for a product map d^2 pairs ordered
    by symbol ``a1 * d + a2``. ``multiple`` is set when two preimages are
    closer than 1e-7 (y is then numerically a critical value).
    """
    if isinstance(f, ProductMap):
        y = np.asarray(y, dtype=np.complex128)
        r1, r2 = preimages(f.f1, y[0]), preimages(f.f2, y[1])
        d = f.degree
        pts = np.empty((d * d, 2), dtype=np.complex128)
        pts[:, 0] = np.repeat(r1.points, d)
        pts[:, 1] = np.tile(r2.points, d)
        return Preimages(pts, max(r1.residual, r2.residual), r1.multiple or r2.multiple)
    y = complex(canonical(y))
    w = _newton_polish(f, _projective_roots(_target_form(f, y)), y)
    res = float(np.max(_chordal(evaluate(f, w), y)))
    return Preimages(w, res, _flag_multiple(w))


def critical_points(f):
    """The 2d - 2 critical points with multiplicity (rational maps only).

    Roots of the Wronskian p'q - pq', viewed as a form of degree 2d - 2, so
    any lost degree is a critical point at infinity.
    """
    if isinstance(f, ProductMap):
        raise TypeError("critical points of a product are per factor; use f.f1 / f.f2")
    pv = np.polynomial.polynomial
    W = pv.polysub(pv.polymul(pv.polyder(f.pa), f.qa), pv.polymul(f.pa, pv.polyder(f.qa)))
    n = 2 * f.degree - 2
    c = np.zeros(n + 1, dtype=np.complex128)
    c[:min(W.size, n + 1)] = W[:n + 1]
    return canonical(_projective_roots(c))


def dedupe(points, tol=1e-9):
    """Drop points within chordal distance ``tol`` of an earlier point."""
    kept = []
    for z in canonical(points).ravel():
        if not kept or np.min(_chordal(np.array(kept), z)) > tol:
            kept.append(z)
    return np.array(kept, dtype=np.complex128)


def postcritical_set(f, depth=40, tol=1e-9):
    """Forward orbits of the critical points up to ``depth`` steps, deduplicated.

    Orbits stop early once they return (within ``tol``) to an earlier point.
    For a product map returns the pair of factor sets.
    """
    if isinstance(f, ProductMap):
        return (postcritical_set(f.f1, depth, tol), postcritical_set(f.f2, depth, tol))
    pts = []
    for c in dedupe(critical_points(f), tol):
        orbit = [c]
        z = c
        for _ in range(depth):
            z = evaluate(f, z)
            if np.min(_chordal(np.array(orbit), z)) <= tol:
                break
            orbit.append(z)
        pts.extend(orbit)
    return dedupe(np.array(pts), tol)


# -- JSON --------------------------------------------------------------------

def _pairs(c):
    return [[float(z.real), float(z.imag)] for z in np.asarray(c, dtype=np.complex128)]


def _from_pairs(seq: Sequence, name):
    try:
        return np.array([complex(a, b) if isinstance(a, (int, float)) else complex(a)
                         for a, b in seq], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: expected a list of [re, im] pairs") from exc


def map_from_json(obj):
    """Build a map from ``{"type": "rational", "num": [[re, im], ...], "den": ...}``
    or ``{"type": "product", "f1": ..., "f2": ...}``."""
    kind = obj.get("type")
    if kind == "rational":
        num = _from_pairs(obj["num"], "num")
        den = _from_pairs(obj.get("den", [[1.0, 0.0]]), "den")
        return RationalMap(ComplexPolynomial(num), ComplexPolynomial(den))
    if kind == "product":
        return ProductMap(map_from_json(obj["f1"]), map_from_json(obj["f2"]))
    raise ValueError(f"type: unknown map type {kind!r}")


def map_to_json(f):
    if isinstance(f, ProductMap):
        return {"type": "product", "f1": map_to_json(f.f1), "f2": map_to_json(f.f2)}
    return {"type": "rational", "num": _pairs(f.num.coeffs), "den": _pairs(f.den.coeffs)}
