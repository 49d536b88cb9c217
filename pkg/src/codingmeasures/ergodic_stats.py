"""Entropy, Lyapunov exponents and the inequalities relating them."""

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels, shift
from .dynamics import ProductMap, evaluate, spherical_derivative
from .errors import ResolutionFailure
from .measures import SampleCloud

GROUP_TOL = 0.05


@dataclass
class ExponentReport:
    """Lyapunov exponents sorted in decreasing order, with standard errors.

    ``per_factor`` keeps the unsorted factor order of a product map.
    ``excluded_mass`` is the mass of atoms where the derivative vanishes.
    """

    exponents: np.ndarray
    stderr: np.ndarray
    per_factor: np.ndarray
    multiplicities: List[int]
    excluded_mass: float
    jacobian_integral: float

    @property
    def k(self):
        return self.exponents.size

    @property
    def distinct(self):
        """Distinct values (group means) matching ``multiplicities``."""
        out, i = [], 0
        for m in self.multiplicities:
            out.append(float(np.mean(self.exponents[i:i + m])))
            i += m
        return out


def _group(values, tol=GROUP_TOL):
    mult = []
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or values[start] - values[i] > tol:
            mult.append(i - start)
            start = i
    return mult


def lyapunov(f, source):
    """Exponents of f with respect to an atomic measure or a sample cloud.

    For a single map this is the integral of log of the spherical
    derivative; for a product map one exponent per factor. Atoms where the
    derivative is exactly 0 are excluded and their mass reported. Cloud
    estimates carry a Monte-Carlo standard error; atomic measures are exact.
    """
    if source.points.shape[0] == 0:
        raise ValueError("empty source")
    der = np.asarray(spherical_derivative(f, source.points), dtype=float)
    der = der[:, None] if der.ndim == 1 else der
    w = source.weights
    with np.errstate(divide="ignore"):
        logs = np.log(der)
    good = np.all(np.isfinite(logs), axis=1)
    excluded = float(w[~good].sum())
    wg = w[good] / w[good].sum()
    lg = logs[good]
    lam = wg @ lg
    if isinstance(source, SampleCloud):
        S = lg.shape[0]
        se = lg.std(axis=0, ddof=1) / np.sqrt(S) if S > 1 else np.zeros(lam.size)
    else:
        se = np.zeros(lam.size)
    order = np.argsort(-lam, kind="stable")
    lam_sorted = lam[order]
    jac = float(wg @ (2.0 * lg.sum(axis=1)))
    return ExponentReport(lam_sorted, se[order], lam.copy(), _group(lam_sorted), excluded, jac)


@dataclass
class EntropyEstimate:
    """Local-entropy estimate from dynamical-ball counts.

    ``entropy`` is the median over reference points of the decay rate of
    log ball counts across times 1..n (weighted least squares). ``naive`` is
    the median of -(1/n) log of the relative count at time n, which carries
    a bias of order (1/n) log(1/r).
    """

    entropy: float
    naive: float
    n_refs: int
    zero_balls: int
    per_reference: np.ndarray = field(repr=False)


def forward_orbits(f, points, n):
    """Columns f^j(points) for j = 0..n-1 (products: factor columns interleaved)."""
    pts = np.asarray(points, dtype=np.complex128)
    cols = []
    cur = pts
    for _ in range(n):
        if pts.ndim == 2:
            cols += [cur[:, 0], cur[:, 1]]
        else:
            cols.append(cur)
        cur = evaluate(f, cur)
    return np.ascontiguousarray(np.stack(cols, axis=1))


def brin_katok_entropy(f, cloud, n, r, max_refs=200):
    """Estimate the metric entropy from Bowen-ball counts in a sample cloud.

    For each reference sample x the cloud points y with
    max_j d(f^j x, f^j y) <= r over j < t are counted for t = 1..n (x itself
    excluded).

    Raises
    ------
    ResolutionFailure
        If every ball is empty already at time 1.
    """
    S = cloud.points.shape[0]
    if S < 100 or n < 2:
        raise ValueError("need at least 100 samples and n >= 2")
    orbits = forward_orbits(f, cloud.points, n)
    R = min(max_refs, S)
    refs = np.linspace(0, S - 1, R).astype(np.int64)
    counts = kernels.bowen_counts(orbits, refs, float(r))
    step = 2 if isinstance(f, ProductMap) else 1
    counts = counts[:, step - 1::step].astype(float)
    if np.all(counts[:, 0] == 0):
        raise ResolutionFailure(f"all balls empty at radius {r}; increase r or the sample size")
    t = np.arange(1, n + 1, dtype=float)
    rates = np.full(R, np.nan)
    for i in range(R):
        keep = counts[i] > 0
        if keep.sum() < 2:
            continue
        x, y, wts = t[keep], np.log(counts[i, keep]), counts[i, keep]
        xm = np.average(x, weights=wts)
        ym = np.average(y, weights=wts)
        rates[i] = -np.sum(wts * (x - xm) * (y - ym)) / np.sum(wts * (x - xm) ** 2)
    last = counts[:, -1]
    zero = int(np.sum(last == 0))
    with np.errstate(divide="ignore"):
        naive_vals = -np.log(last[last > 0] / (S - 1)) / n
    naive = float(np.median(naive_vals)) if naive_vals.size else float("nan")
    valid = rates[np.isfinite(rates)]
    if valid.size == 0:
        raise ResolutionFailure("no reference point has two nonempty ball counts")
    return EntropyEstimate(float(np.median(valid)), naive, R, zero, rates)


def theta_k(k):
    """2 / (5 (k - 1)) for k >= 2; ``None`` for k = 1, where no gate applies."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return None if k == 1 else 2.0 / (5.0 * (k - 1))


@dataclass
class InequalityRecord:
    name: str
    lhs: float
    rhs: float
    slack: float
    passed: Optional[bool]
    applicable: bool = True
    stderr: float = 0.0
    note: str = ""


@dataclass
class InequalityReport:
    h: float
    d: int
    k: int
    records: List[InequalityRecord]

    def record(self, name):
        for rec in self.records:
            if rec.name == name:
                return rec
        raise KeyError(name)

    def to_json(self):
        return json.dumps({"h": self.h, "d": self.d, "k": self.k,
                           "records": [asdict(r) for r in self.records]}, indent=2)

    def table(self):
        lines = [f"{'inequality':<14} {'lhs':>10} {'rhs':>10} {'slack':>10}  result"]
        for r in self.records:
            res = "n/a" if not r.applicable else ("value" if r.passed is None else ("pass" if r.passed else "FAIL"))
            lines.append(f"{r.name:<14} {r.lhs:>10.6f} {r.rhs:>10.6f} {r.slack:>10.6f}  {res}")
        return "\n".join(lines)


def _record(name, lhs, rhs, se, note=""):
    slack = rhs - lhs
    return InequalityRecord(name, float(lhs), float(rhs), float(slack), bool(slack >= -3.0 * se),
                            True, float(se), note)


def inequality_report(h, exponents, d, k=None, h_stderr=0.0):
    """Check the entropy/exponent inequalities for entropy h and given exponents.

    Records: ``ruelle`` (h <= 2 sum lambda_i^+), ``thm_d_j`` for j = 2..k
    (h <= (j-1) log d + 2 sum_{i>=j} lambda_i^+, one index per exponent),
    ``thm_c`` (lambda_k >= (h - (k-1) log d)/2, applicable when
    h > (k-1) log d) and ``dim_bound`` (the dimension lower bound
    (k-1) log d / lambda_1 + (h - (k-1) log d) / lambda_k, which is h/lambda
    for k = 1). A record passes when slack >= -3 standard errors.
    """
    lam = np.asarray(exponents.exponents, dtype=float)
    se = np.asarray(exponents.stderr, dtype=float)
    k = lam.size if k is None else k
    logd = np.log(d)
    pos = np.maximum(lam, 0.0)
    recs = []
    recs.append(_record("ruelle", h, 2 * pos.sum(), np.hypot(h_stderr, 2 * np.sqrt(np.sum(se ** 2)))))
    for j in range(2, k + 1):
        rhs = (j - 1) * logd + 2 * pos[j - 1:].sum()
        recs.append(_record(f"thm_d_{j}", h, rhs, np.hypot(h_stderr, 2 * np.sqrt(np.sum(se[j - 1:] ** 2)))))
    base = (k - 1) * logd
    lhs = (h - base) / 2.0
    rec = _record("thm_c", lhs, lam[-1], np.hypot(h_stderr / 2, se[-1]))
    if not h > base:
        rec.applicable, rec.passed, rec.note = False, None, "requires h > (k-1) log d"
    recs.append(rec)
    if lam[-1] > 0 and lam[0] > 0:
        value = base / lam[0] + (h - base) / lam[-1]
        recs.append(InequalityRecord("dim_bound", float(value), float(value), 0.0, None))
    else:
        recs.append(InequalityRecord("dim_bound", float("nan"), float("nan"), float("nan"), None, False,
                                     note="requires positive exponents"))
    return InequalityReport(float(h), int(d), int(k), recs)


@dataclass
class TauGate:
    tau: float
    tau_literal: float
    theta_k: Optional[float]
    admissible: bool
    weight_condition: Optional[bool]


def tau_gate(potential, d, k, theta, eta=None):
    """Admissibility of a potential: always for k = 1, else theta < theta_k and tau > 0.

    For Bernoulli potentials also reports whether max w <= d^(-k + eta)
    (``eta`` defaults to ``theta``).
    """
    tt = shift.tau_theta(potential, d, k, theta)
    tk = theta_k(k)
    admissible = True if k == 1 else bool(theta < tk and tt.tau > 0)
    cond = None
    if isinstance(potential, shift.Bernoulli):
        eta = theta if eta is None else eta
        cond = bool(max(potential.weights) <= float(d) ** (-k + eta))
    return TauGate(tt.tau, tt.tau_literal, tk, admissible, cond)
