"""Symbolic dynamics on the full shift over M symbols.

Potentials are locally constant (Bernoulli weights or a finite-range table),
so every equilibrium state is an exact stationary Markov chain and cylinder
masses, mixing gaps and correlations can be computed exactly.

Symbols are 0-based integers ``0..M-1``. A word of length n is identified with
its base-M integer index, first symbol most significant; arrays indexed by
words of a given length always use that lexicographic order.
"""

from dataclasses import dataclass, field
from math import erf, sqrt
from typing import Callable, Union

import numpy as np

from . import kernels
from .errors import EnumerationCapExceeded, NumericalFailure

ENUMERATION_CAP = 10 ** 6
POWER_TOL = 1e-13
POWER_MAX_ITER = 10 ** 5
_BLOCK = 2048


@dataclass(frozen=True)
class Bernoulli:
    """Product measure potential phi(a) = log w[a_0]."""

    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("weights: need at least two symbols")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights: every weight must be positive and finite")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights: must sum to 1 (got {w.sum():.12g})")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def alphabet(self):
        return len(self.weights)

    @property
    def memory(self):
        return 1

    @property
    def log_table(self):
        return np.log(np.asarray(self.weights))


@dataclass(frozen=True)
class FiniteRange:
    """Potential depending on the first ``memory`` symbols.

    ``log_table`` is indexed by the m-word (row-major, first symbol most
    significant), i.e. ``log_table[a_0 * M**(m-1) + ... + a_{m-1}]``.
    """

    memory: int
    alphabet: int
    log_table: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.alphabet < 2:
            raise ValueError("alphabet: need M >= 2")
        if self.memory < 1:
            raise ValueError("memory: need m >= 1")
        t = np.asarray(self.log_table, dtype=float).ravel()
        if t.size != self.alphabet ** self.memory:
            raise ValueError(f"log_table: expected {self.alphabet ** self.memory} entries, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise ValueError("log_table: entries must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "log_table", t)

    def __hash__(self):
        return hash((self.memory, self.alphabet, self.log_table.tobytes()))

    def __eq__(self, other):
        return (isinstance(other, FiniteRange) and self.memory == other.memory
                and self.alphabet == other.alphabet
                and np.array_equal(self.log_table, other.log_table))


Potential = Union[Bernoulli, FiniteRange]


def potential_from_json(obj):
    """Build a potential from its JSON dictionary form."""
    kind = obj.get("type")
    if kind == "bernoulli":
        return Bernoulli(tuple(obj["weights"]))
    if kind == "finite_range":
        return FiniteRange(int(obj["memory"]), int(obj["alphabet"]), np.asarray(obj["log_table"], float))
    raise ValueError(f"type: unknown potential type {kind!r}")


def potential_to_json(potential):
    if isinstance(potential, Bernoulli):
        return {"type": "bernoulli", "weights": list(potential.weights)}
    return {"type": "finite_range", "memory": potential.memory, "alphabet": potential.alphabet,
            "log_table": [float(x) for x in potential.log_table]}


@dataclass(frozen=True)
class GibbsMeasure:
    """Equilibrium state of a locally constant potential as a Markov chain.

    The chain state is the last ``order`` symbols (``order >= 1``; a Bernoulli
    measure uses order 1 with identical transition rows). ``stat`` is the
    stationary law of the first ``order`` symbols and ``cond[u, b]`` the
    probability that symbol ``b`` follows state ``u``.
    """

    potential: object
    pressure: float
    alphabet: int
    order: int
    stat: np.ndarray = field(repr=False)
    cond: np.ndarray = field(repr=False)

    @property
    def nstates(self):
        return self.alphabet ** self.order

    def transition_matrix(self):
        """Dense state-to-state transition matrix of the order-word chain."""
        M, n = self.alphabet, self.nstates
        T = np.zeros((n, n))
        u = np.arange(n)
        for b in range(M):
            T[u, (u * M + b) % n] += self.cond[:, b]
        return T


def _power_iteration(Q, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    x = np.full(Q.shape[0], 1.0 / Q.shape[0])
    for _ in range(max_iter):
        y = Q @ x
        s = y.sum()
        if not np.isfinite(s) or s <= 0:
            raise NumericalFailure("power iteration produced a non-positive vector")
        y /= s
        if np.max(np.abs(y - x)) <= tol:
            lam = (Q @ y).sum() / y.sum()
            return lam, y
        x = y
    raise NumericalFailure(f"power iteration did not converge in {max_iter} iterations")


def perron_data(Q, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Perron eigenvalue with right and left eigenvectors of a primitive matrix."""
    lam, right = _power_iteration(Q, tol, max_iter)
    _, left = _power_iteration(Q.T, tol, max_iter)
    return lam, right, left


def gibbs_measure(potential):
    """Exact equilibrium state of ``potential``."""
    M = potential.alphabet
    t = potential.log_table
    m = potential.memory
    if isinstance(potential, Bernoulli) or m == 1:
        tmax = t.max()
        e = np.exp(t - tmax)
        P = tmax + np.log(e.sum())
        if isinstance(potential, Bernoulli):
            w = np.asarray(potential.weights, dtype=float)
            P = float(np.log(w.sum()))
        else:
            w = e / e.sum()
        return GibbsMeasure(potential, float(P), M, 1, w.copy(), np.tile(w, (M, 1)))
    r = m - 1
    n = M ** r
    tmax = t.max()
    Q = np.zeros((n, n))
    u = np.arange(n)
    for b in range(M):
        Q[u, (u * M + b) % n] = np.exp(t[u * M + b] - tmax)
    lam, right, left = perron_data(Q)
    cond = np.empty((n, M))
    for b in range(M):
        v = (u * M + b) % n
        cond[:, b] = Q[u, v] * right[v] / (lam * right)
    cond /= cond.sum(axis=1, keepdims=True)
    stat = left * right
    stat /= stat.sum()
    return GibbsMeasure(potential, float(np.log(lam) + tmax), M, r, stat, cond)


def pressure(potential):
    """Topological pressure: log of the Perron eigenvalue of the transfer matrix."""
    return gibbs_measure(potential).pressure


def _as_measure(obj):
    return obj if isinstance(obj, GibbsMeasure) else gibbs_measure(obj)


def cylinder_masses(measure, n, cap=ENUMERATION_CAP):
    """Masses of all n-cylinders, in lexicographic word order."""
    mu = _as_measure(measure)
    M, r = mu.alphabet, mu.order
    if M ** n > cap:
        raise EnumerationCapExceeded(f"{M}**{n} cylinders exceeds cap {cap}")
    if n == 0:
        return np.ones(1)
    if n <= r:
        return mu.stat.reshape(M ** n, M ** (r - n)).sum(axis=1)
    masses = mu.stat.copy()
    for length in range(r, n):
        states = np.arange(M ** length) % mu.nstates
        masses = (masses[:, None] * mu.cond[states]).ravel()
    return masses


def entropy(potential):
    """Metric entropy of the equilibrium state, h = P - integral of phi."""
    if isinstance(potential, Bernoulli):
        w = np.asarray(potential.weights)
        return float(-(w * np.log(w)).sum())
    mu = gibbs_measure(potential)
    masses = cylinder_masses(mu, potential.memory)
    return float(mu.pressure - masses @ potential.log_table)


def _check_word(mu, word):
    word = np.asarray(word, dtype=np.int64).ravel()
    if word.size and (word.min() < 0 or word.max() >= mu.alphabet):
        raise ValueError(f"word symbols must lie in 0..{mu.alphabet - 1}")
    return word


def word_index(word, M):
    idx = 0
    for a in word:
        idx = idx * M + int(a)
    return idx


def word_from_index(idx, n, M):
    out = []
    for _ in range(n):
        out.append(idx % M)
        idx //= M
    return tuple(reversed(out))


def cylinder_mass(measure, word):
    """Exact mass of the cylinder [word]; the empty word has mass 1."""
    mu = _as_measure(measure)
    word = _check_word(mu, word)
    n, M, r = word.size, mu.alphabet, mu.order
    if n == 0:
        return 1.0
    if n <= r:
        return float(cylinder_masses(mu, n)[word_index(word, M)])
    mass = mu.stat[word_index(word[:r], M)]
    state = word_index(word[:r], M)
    for b in word[r:]:
        mass *= mu.cond[state, b]
        state = (state * M + int(b)) % mu.nstates
    return float(mass)


def _cdfs(mu):
    stat_cdf = np.cumsum(mu.stat)
    cond_cdf = np.cumsum(mu.cond, axis=1)
    return stat_cdf, cond_cdf


def sample_words(measure, n, count, rng):
    """Draw ``count`` words of length n from the measure, as an int array."""
    mu = _as_measure(measure)
    if n < 1:
        raise ValueError("n must be >= 1")
    stat_cdf, cond_cdf = _cdfs(mu)
    cols = max(n - mu.order, 0) + 1
    out = np.empty((count, n), dtype=np.int64)
    for start in range(0, count, _BLOCK):
        stop = min(start + _BLOCK, count)
        U = rng.random((stop - start, cols))
        out[start:stop] = kernels.sample_chain(stat_cdf, cond_cdf, mu.alphabet, mu.order, U)[:, :n]
    return out


def sample_word(measure, n, rng):
    return tuple(int(a) for a in sample_words(measure, n, 1, rng)[0])


def words_to_indices(words, M):
    words = np.asarray(words, dtype=np.int64)
    idx = np.zeros(words.shape[0], dtype=np.int64)
    for j in range(words.shape[1]):
        idx = idx * M + words[:, j]
    return idx


def gibbs_bounds_check(measure, n_max, cap=ENUMERATION_CAP):
    """Extreme ratios nu[C] / exp(S_n phi - n P) over cylinders of length <= n_max.

    The Birkhoff sum is taken at every point of the cylinder, which for a
    memory-m potential means every extension by m - 1 further symbols.
    """
    mu = _as_measure(measure)
    pot = mu.potential
    M, m = mu.alphabet, pot.memory
    t = pot.log_table
    lo, hi = np.inf, -np.inf
    for n in range(1, n_max + 1):
        L = n + m - 1
        if M ** L > cap:
            raise EnumerationCapExceeded(f"{M}**{L} words exceeds cap {cap}")
        idx = np.arange(M ** L)
        sn = np.zeros(M ** L)
        for i in range(n):
            sn += t[(idx // M ** (L - m - i)) % M ** m]
        masses = cylinder_masses(mu, n)
        log_ratio = np.log(masses[idx // M ** (m - 1)]) - (sn - n * mu.pressure)
        lo = min(lo, float(np.exp(log_ratio.min())))
        hi = max(hi, float(np.exp(log_ratio.max())))
    return lo, hi


def _state_digits(mu):
    n, M, r = mu.nstates, mu.alphabet, mu.order
    u = np.arange(n)
    return np.stack([(u // M ** (r - 1 - i)) % M for i in range(r)], axis=1)


def event_mass(measure, constraints):
    """Mass of the set of sequences with ``seq[pos] == sym`` for each item.

    ``constraints`` maps coordinate -> symbol. Computed with a forward pass
    over the order-word chain, so arbitrary gaps are exact.
    """
    mu = _as_measure(measure)
    if not constraints:
        return 1.0
    M, r, n = mu.alphabet, mu.order, mu.nstates
    last = max(constraints)
    digits = _state_digits(mu)
    p = mu.stat.copy()
    for i in range(r):
        if i in constraints:
            p = p * (digits[:, i] == constraints[i])
    u = np.arange(n)
    for pos in range(r, last + 1):
        nxt = np.zeros(n)
        syms = [constraints[pos]] if pos in constraints else range(M)
        for b in syms:
            np.add.at(nxt, (u * M + b) % n, p * mu.cond[:, b])
        p = nxt
    return float(p.sum())


def mixing_gap(measure, e_word, f_word, n):
    """|nu(E cap F) - nu(E) nu(F)| for cylinders E, F separated by n steps.

    E occupies coordinates ``0..len(E)-1``; F starts ``n`` steps after the last
    coordinate of E, i.e. at coordinate ``len(E) - 1 + n``. Requires n >= 1.
    """
    mu = _as_measure(measure)
    e = _check_word(mu, e_word)
    f = _check_word(mu, f_word)
    if n < 1 or e.size == 0 or f.size == 0:
        raise ValueError("malformed windows: need non-empty words and n >= 1")
    start = e.size - 1 + n
    cons = {i: int(a) for i, a in enumerate(e)}
    cons.update({start + i: int(a) for i, a in enumerate(f)})
    joint = event_mass(mu, cons)
    return abs(joint - cylinder_mass(mu, e) * cylinder_mass(mu, f))


def fit_decay(ns, values, floor=1e-300):
    """Least-squares fit values ~ c * exp(-rate * n); returns (c, rate)."""
    ns = np.asarray(ns, dtype=float)
    v = np.maximum(np.abs(np.asarray(values, dtype=float)), floor)
    slope, intercept = np.polyfit(ns, np.log(v), 1)
    return float(np.exp(intercept)), float(-slope)


@dataclass(frozen=True)
class CylinderObservable:
    """Function constant on ``depth``-cylinders; ``values[word_index]``."""

    depth: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def indicator(cls, word, M):
        word = tuple(word)
        v = np.zeros(M ** len(word))
        v[word_index(word, M)] = 1.0
        return cls(len(word), v)

    def extend(self, depth, M):
        """Same function seen as depth-``depth`` observable (depth >= self.depth)."""
        if depth == self.depth:
            return self
        idx = np.arange(M ** depth) // M ** (depth - self.depth)
        return CylinderObservable(depth, self.values[idx])

    def mean(self, measure):
        return float(cylinder_masses(measure, self.depth) @ self.values)

    def evaluate(self, words, M):
        """Values at the given ``(S, >= depth)`` integer words."""
        return self.values[words_to_indices(np.asarray(words)[:, :self.depth], M)]


@dataclass(frozen=True)
class SampledObservable:
    """Observable given by a function of the first ``depth`` symbols.

    ``func`` receives an ``(S, depth)`` integer array and returns ``S`` values.
    """

    func: Callable
    depth: int


def observable_from_sampled(obs, M, cap=ENUMERATION_CAP):
    if M ** obs.depth > cap:
        raise EnumerationCapExceeded(f"{M}**{obs.depth} exceeds cap {cap}")
    idx = np.arange(M ** obs.depth)
    words = np.stack([(idx // M ** (obs.depth - 1 - i)) % M for i in range(obs.depth)], axis=1)
    return CylinderObservable(obs.depth, np.asarray(obs.func(words), dtype=float))


def _eval_on_words(obs, words, M):
    words = np.asarray(words, dtype=np.int64)
    if isinstance(obs, SampledObservable):
        return np.asarray(obs.func(words[:, :obs.depth]), dtype=float)
    return obs.values[words_to_indices(words[:, :obs.depth], M)]


@dataclass(frozen=True)
class Correlation:
    value: float
    stderr: float
    mean1: float
    mean2: float
    exact: bool


def correlation(measure, chi1, chi2, n, rng=None, cap=ENUMERATION_CAP, samples=200_000):
    """Integral of chi1 * chi2 o s^n after centering both observables.

    The means are subtracted exactly and reported. Exact via the transfer
    matrix (or enumeration for overlapping windows); if enumeration would
    exceed ``cap`` the value is a Monte-Carlo estimate with standard error.
    """
    mu = _as_measure(measure)
    M, r = mu.alphabet, mu.order
    m1, m2 = chi1.mean(mu), chi2.mean(mu)
    d1 = max(chi1.depth, r)
    d2 = max(chi2.depth, r)
    c1 = chi1.extend(d1, M)
    c2 = chi2.extend(d2, M)
    a1 = c1.values - m1
    a2 = c2.values - m2
    if n >= d1 - r:
        mass1 = cylinder_masses(mu, d1, cap)
        mass2 = cylinder_masses(mu, d2, cap)
        ns = mu.nstates
        v1 = np.bincount(np.arange(M ** d1) % ns, weights=a1 * mass1, minlength=ns)
        first = np.arange(M ** d2) // M ** (d2 - r)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond_mass = np.where(mu.stat[first] > 0, mass2 / mu.stat[first], 0.0)
        v2 = np.bincount(first, weights=a2 * cond_mass, minlength=ns)
        k = n - d1 + r
        T = mu.transition_matrix()
        vec = v1
        for _ in range(k):
            vec = vec @ T
        return Correlation(float(vec @ v2), 0.0, m1, m2, True)
    L = max(d1, n + d2)
    if M ** L <= cap:
        masses = cylinder_masses(mu, L, cap)
        w = np.arange(M ** L)
        i1 = w // M ** (L - d1)
        i2 = (w // M ** (L - n - d2)) % M ** d2
        return Correlation(float(masses @ (a1[i1] * a2[i2])), 0.0, m1, m2, True)
    if rng is None:
        rng = np.random.default_rng(0)
    words = sample_words(mu, L, samples, rng)
    prod = a1[words_to_indices(words[:, :d1], M)] * a2[words_to_indices(words[:, n:n + d2], M)]
    return Correlation(float(prod.mean()), float(prod.std(ddof=1) / sqrt(samples)), m1, m2, False)


def _continue_words(mu, prefixes, length, rng):
    """Extend each prefix row by ``length`` symbols drawn from the chain."""
    M, r, ns = mu.alphabet, mu.order, mu.nstates
    prefixes = np.asarray(prefixes, dtype=np.int64)
    S, n = prefixes.shape
    total = n + length
    out = np.empty((S, total), dtype=np.int64)
    out[:, :n] = prefixes
    pos = n
    if n < r:
        # complete the initial order-word conditionally on the prefix
        digits = _state_digits(mu)
        pref_idx = words_to_indices(prefixes, M)
        state_prefix = np.arange(ns) // M ** (r - n)
        u = rng.random(S)
        states = np.empty(S, dtype=np.int64)
        for i in range(S):
            cand = np.nonzero(state_prefix == pref_idx[i])[0]
            p = mu.stat[cand]
            cdf = np.cumsum(p) / p.sum()
            states[i] = cand[min(np.searchsorted(cdf, u[i], side="right"), cand.size - 1)]
        take = min(r, total) - n
        out[:, n:n + take] = digits[states, n:n + take]
        pos = n + take
        state = states
    else:
        state = words_to_indices(prefixes[:, n - r:], M)
    cdf = np.cumsum(mu.cond, axis=1)
    while pos < total:
        u = rng.random(S)
        b = np.minimum((u[:, None] >= cdf[state]).sum(axis=1), M - 1)
        out[:, pos] = b
        state = (state * M + b) % ns
        pos += 1
    return out


@dataclass(frozen=True)
class ApproxError:
    value: float
    stderr: float
    exact: bool


def cylinder_approx_error(measure, chi, n, p=1.0, rng=None, cap=ENUMERATION_CAP,
                          outer=2000, inner=64):
    """L^p norm of chi - E(chi | n-cylinders).

    Exact for cylinder observables (and sampled ones small enough to
    enumerate). Otherwise a nested Monte-Carlo estimate: the conditional
    expectation uses ``inner`` independent continuations of each prefix, which
    biases the estimate upward by a factor about (1 + 1/inner)^(1/2) for p = 2.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    mu = _as_measure(measure)
    M = mu.alphabet
    if isinstance(chi, SampledObservable) and M ** chi.depth <= cap:
        chi = observable_from_sampled(chi, M, cap)
    if isinstance(chi, CylinderObservable):
        if n >= chi.depth:
            return ApproxError(0.0, 0.0, True)
        masses = cylinder_masses(mu, chi.depth, cap)
        group = np.arange(M ** chi.depth) // M ** (chi.depth - n)
        cmass = np.bincount(group, weights=masses, minlength=M ** n)
        csum = np.bincount(group, weights=masses * chi.values, minlength=M ** n)
        with np.errstate(divide="ignore", invalid="ignore"):
            cexp = np.where(cmass > 0, csum / cmass, 0.0)
        dev = np.abs(chi.values - cexp[group]) ** p
        return ApproxError(float((masses @ dev) ** (1.0 / p)), 0.0, True)
    if rng is None:
        rng = np.random.default_rng(0)
    D = chi.depth
    if n >= D:
        return ApproxError(0.0, 0.0, True)
    prefixes = sample_words(mu, n, outer, rng) if n > 0 else np.zeros((outer, 0), dtype=np.int64)
    rep = np.repeat(prefixes, inner + 1, axis=0)
    full = _continue_words(mu, rep, D - n, rng)
    vals = _eval_on_words(chi, full, M).reshape(outer, inner + 1)
    cexp = vals[:, 1:].mean(axis=1)
    dev = np.abs(vals[:, 0] - cexp) ** p
    mean_dev = dev.mean()
    se_dev = dev.std(ddof=1) / sqrt(outer)
    value = mean_dev ** (1.0 / p)
    stderr = se_dev * (1.0 / p) * mean_dev ** (1.0 / p - 1.0) if mean_dev > 0 else 0.0
    return ApproxError(float(value), float(stderr), False)


def _normal_cdf(x):
    return 0.5 * (1.0 + np.vectorize(erf)(x / sqrt(2.0)))


def clt_gap(values, sigma):
    """Max gap between the mid-CDF of ``values`` and the N(0, sigma^2) CDF.

    The mid-CDF (average of left and right limits) is evaluated at the
    distinct observed values, which removes the half-jump artefact of
    lattice-valued Birkhoff sums.
    """
    if sigma <= 0:
        return float("nan")
    x = np.sort(np.asarray(values, dtype=float))
    S = x.size
    uniq, first = np.unique(x, return_index=True)
    counts = np.diff(np.append(first, S))
    left = first / S
    mid = left + 0.5 * counts / S
    return float(np.max(np.abs(mid - _normal_cdf(uniq / sigma))))


@dataclass(frozen=True)
class SigmaEstimate:
    sigma: float
    stderr: float
    clt_gap: float
    mean_subtracted: float
    n: int
    samples: int


def birkhoff_sigma(measure, chi, n, samples, rng):
    """Monte-Carlo estimate of |S_n(chi)|_2 / sqrt(n) for a centered observable.

    ``chi`` is centered with its exact mean first. Also returns the CLT
    diagnostic ``clt_gap`` for the empirical law of S_n / sqrt(n).
    """
    mu = _as_measure(measure)
    if n < 1 or samples < 2:
        raise ValueError("need n >= 1 and samples >= 2")
    M = mu.alphabet
    mean = chi.mean(mu)
    table = chi.values - mean
    stat_cdf, cond_cdf = _cdfs(mu)
    L = n + chi.depth - 1
    cols = max(L - mu.order, 0) + 1
    sums = np.empty(samples)
    for start in range(0, samples, _BLOCK):
        stop = min(start + _BLOCK, samples)
        U = rng.random((stop - start, cols))
        sums[start:stop] = kernels.markov_birkhoff(stat_cdf, cond_cdf, M, mu.order, table,
                                                   chi.depth, n, U)
    z = sums / sqrt(n)
    sq = z ** 2
    var = float(sq.mean())
    sigma = sqrt(var)
    se_var = float(sq.std(ddof=1) / sqrt(samples))
    stderr = se_var / (2.0 * sigma) if sigma > 0 else 0.0
    return SigmaEstimate(sigma, stderr, clt_gap(z, sigma), mean, n, samples)


@dataclass(frozen=True)
class TauTheta:
    tau: float
    tau_literal: float


def tau_theta(potential, d, k, theta):
    """Admissibility margin P - sup(phi) - (k - theta) log d.

    ``tau_literal`` uses the sup-norm of phi instead of its supremum; with a
    normalized Bernoulli potential that variant is always negative.
    """
    if d < 2 or k < 1 or theta <= 0:
        raise ValueError("need d >= 2, k >= 1 and theta > 0")
    P = pressure(potential)
    t = potential.log_table
    base = (k - theta) * np.log(d)
    return TauTheta(float(P - t.max() - base), float(P - np.abs(t).max() - base))
