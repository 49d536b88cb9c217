"""Coding trees of iterated preimages built by path lifting.

For a base point z and one path gamma_a from z to each preimage w_a, the
level-n node of a word w = (a_0, ..., a_{n-1}) is a point z_n(w) with
f^n(z_n(w)) = z and f(z_{n+1}(w a)) = z_n(shift(w) a). Every node carries the
stored path that created it; the next level is obtained by lifting stored
paths through one application of f.

Layout (one factor, M = d symbols): level n keeps ``nodes[idx(w)]`` in
lexicographic order and, per last symbol a, an array ``paths[a]`` whose row
``idx(u)`` is the stored path of the word ``u a``. All stored paths ending in
a share the sample grid of gamma_a. Product maps are handled as the product
of two factor trees; the product symbol is ``a1 * d + a2``.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .dynamics import (CRIT_TOL, INF, ProductMap, RationalMap, canonical, chordal_distance,
                       evaluate, postcritical_set, preimages)
from .errors import BasePointRejected, IncompleteLevel, LiftFailed

STEP_MAX = 1e-2
STEP_MIN = 1e-6
MAX_NEWTON = 12
POSTCRITICAL_DEPTH = 40
DETOURS = 32
COMPAT_TOL = 1e-8


@dataclass(frozen=True)
class SpherePath:
    """Samples ``points[i]`` at parameters ``t[i]`` with t[0] = 0 and t[-1] = 1."""

    t: np.ndarray
    points: np.ndarray

    def __len__(self):
        return self.points.size

    @property
    def start(self):
        return complex(self.points[0])

    @property
    def end(self):
        return complex(self.points[-1])

    def max_step(self):
        return float(np.max(chordal_distance(self.points[:-1], self.points[1:]))) if len(self) > 1 else 0.0

    def diameter(self):
        return float(kernels.path_diameters(self.points[None, :])[0])


# -- sphere geometry -----------------------------------------------------------

def to_sphere(z):
    """Inverse stereographic projection onto the unit sphere (inf -> north pole)."""
    z = canonical(z)
    fin = np.isfinite(z)
    zf = np.where(fin, z, 0.0)
    r2 = np.abs(zf) ** 2
    out = np.stack([2 * zf.real, 2 * zf.imag, r2 - 1.0], axis=-1) / (r2 + 1.0)[..., None]
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def from_sphere(x):
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    den = 1.0 - x[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x[..., 0] + 1j * x[..., 1]) / den
    return canonical(np.where(den <= 1e-300, INF, z))


def geodesic(a, b, step_max=STEP_MAX):
    """Great-circle arc from a to b sampled with chordal steps <= step_max.

    Endpoints are reproduced exactly. Antipodal endpoints have no unique arc
    and raise ``ValueError``.
    """
    pa, pb = to_sphere(a), to_sphere(b)
    omega = float(np.arccos(np.clip(pa @ pb, -1.0, 1.0)))
    if np.pi - omega < 1e-9:
        raise ValueError("antipodal endpoints")
    n = max(int(np.ceil(omega / step_max)), 1) + 1
    s = np.linspace(0.0, 1.0, n)
    if omega < 1e-15:
        pts = np.full(n, complex(canonical(a)))
    else:
        w1 = np.sin((1 - s) * omega) / np.sin(omega)
        w2 = np.sin(s * omega) / np.sin(omega)
        pts = from_sphere(w1[:, None] * pa + w2[:, None] * pb)
    pts[0], pts[-1] = complex(canonical(a)), complex(canonical(b))
    return pts


def polyline(vertices, step_max=STEP_MAX):
    """Concatenated geodesics through ``vertices``, parametrized by chordal length."""
    parts = []
    for a, b in zip(vertices[:-1], vertices[1:]):
        seg = geodesic(a, b, step_max)
        parts.append(seg if not parts else seg[1:])
    pts = np.concatenate(parts)
    steps = chordal_distance(pts[:-1], pts[1:]) if pts.size > 1 else np.zeros(0)
    t = np.concatenate([[0.0], np.cumsum(steps)])
    t = t / t[-1] if t[-1] > 0 else np.linspace(0.0, 1.0, pts.size)
    t[-1] = 1.0
    return SpherePath(t, pts)


def random_sphere_point(rng):
    """A point uniformly distributed on the sphere."""
    v = rng.standard_normal(3)
    return complex(from_sphere(v))


def clearance_of(points, avoid):
    """Min chordal distance from path samples to the points to avoid."""
    avoid = np.asarray(avoid, dtype=np.complex128)
    if avoid.size == 0:
        return np.inf
    return float(np.min(chordal_distance(np.asarray(points)[:, None], avoid[None, :])))


# -- base paths ---------------------------------------------------------------

def _ordered_preimages(f, z):
    pre = preimages(f, z)
    if pre.multiple:
        raise BasePointRejected(f"base point {z} is numerically a critical value")
    pts = pre.points
    # deterministic labels: sort by argument, then modulus
    key = np.lexsort((np.abs(pts), np.round(np.angle(pts), 12)))
    return pts[key]


def build_base_paths(f, z, clearance, rng, step_max=STEP_MAX, depth=POSTCRITICAL_DEPTH,
                     detours=DETOURS):
    """One path per preimage of z, avoiding the truncated postcritical set.

    Each path is the great-circle arc from z to w_a; if it comes closer than
    ``clearance`` to the postcritical set, up to ``detours`` two-arc paths
    through random midpoints are tried. For a product map returns a pair of
    factor path lists.

    Raises
    ------
    BasePointRejected
        If z itself is too close to the postcritical set or no admissible
        path is found for some preimage.
    """
    if isinstance(f, ProductMap):
        z = np.asarray(z, dtype=np.complex128)
        return (build_base_paths(f.f1, z[0], clearance, rng, step_max, depth, detours),
                build_base_paths(f.f2, z[1], clearance, rng, step_max, depth, detours))
    z = complex(canonical(z))
    post = postcritical_set(f, depth)
    if clearance_of(np.array([z]), post) < clearance:
        raise BasePointRejected(f"base point {z} lies within {clearance} of the postcritical set")
    paths = []
    for w in _ordered_preimages(f, z):
        path = None
        try:
            cand = polyline([z, w], step_max)
            if clearance_of(cand.points, post) >= clearance:
                path = cand
        except ValueError:
            pass
        for _ in range(detours if path is None else 0):
            mid = random_sphere_point(rng)
            try:
                cand = polyline([z, mid, w], step_max)
            except ValueError:
                continue
            if clearance_of(cand.points, post) >= clearance:
                path = cand
                break
        if path is None:
            raise BasePointRejected(f"no path from {z} to preimage {w} keeps clearance {clearance}")
        paths.append(path)
    return paths


def choose_base_point(f, rng, clearance, tries=100, **kw):
    """Draw random base points until base paths can be built; returns (z, paths)."""
    for _ in range(tries):
        if isinstance(f, ProductMap):
            z = np.array([random_sphere_point(rng), random_sphere_point(rng)])
        else:
            z = random_sphere_point(rng)
        try:
            return z, build_base_paths(f, z, clearance, rng, **kw)
        except BasePointRejected:
            continue
    raise BasePointRejected(f"no admissible base point in {tries} random draws")


# -- lifting ------------------------------------------------------------------

def _lift_rows(f, eta, starts):
    """Lift each row of ``eta`` from ``starts``; rows with NaN input fail."""
    eta = np.ascontiguousarray(eta, dtype=np.complex128)
    starts = np.ascontiguousarray(starts, dtype=np.complex128)
    ok = ~np.isnan(starts) & ~np.isnan(eta).any(axis=1)
    out = np.full(eta.shape, complex(np.nan, np.nan), dtype=np.complex128)
    status = np.full(eta.shape[0], kernels.LIFT_DIVERGED, dtype=np.int8)
    if ok.any():
        o, s = kernels.lift_batch(f.pa, f.qa, f.pb, f.qb, CRIT_TOL, eta[ok], starts[ok],
                                  STEP_MIN, MAX_NEWTON)
        out[ok] = o
        status[ok] = s
    return out, status


def lift_path(f, eta, start):
    """Lift ``eta`` (a SpherePath) through f starting at ``start``.

    Raises
    ------
    LiftFailed
        If the lift runs into a critical point or Newton continuation fails.
    """
    if chordal_distance(evaluate(f, start), eta.points[0]) > COMPAT_TOL:
        raise ValueError("start does not map to the first point of the path")
    out, status = _lift_rows(f, eta.points[None, :], np.array([start]))
    if status[0] == kernels.LIFT_CRITICAL:
        raise LiftFailed("lift approached a critical point")
    if status[0] != kernels.LIFT_OK:
        raise LiftFailed("Newton continuation failed at the minimal step")
    return SpherePath(eta.t, out[0])


# -- trees --------------------------------------------------------------------

class _FactorTree:
    """Coding tree of a single rational map."""

    def __init__(self, f: RationalMap, z, base_paths: List[SpherePath], keep_paths=False):
        self.f = f
        self.keep_paths = keep_paths
        self.z = complex(canonical(z))
        self.base = base_paths
        self.M = f.degree
        self.level = 1
        self.nodes = np.array([p.end for p in base_paths])
        self.paths = [p.points[None, :].copy() for p in base_paths]
        self.level_nodes = [np.array([self.z]), self.nodes]
        self.level_paths = [None, self.paths] if keep_paths else None

    def extend(self):
        M, n = self.M, self.level
        prev = self.nodes
        rows_prev = M ** (n - 1)
        new_nodes = np.empty(M ** (n + 1), dtype=np.complex128)
        new_paths = []
        shift_idx = np.arange(M ** n) % rows_prev
        for a in range(M):
            eta = self.paths[a][shift_idx]
            lifted, _ = _lift_rows(self.f, eta, prev)
            new_paths.append(lifted)
            new_nodes[np.arange(M ** n) * M + a] = lifted[:, -1]
        self.paths = new_paths
        self.nodes = new_nodes
        self.level = n + 1
        self.level_nodes.append(new_nodes)
        if self.keep_paths:
            self.level_paths.append(new_paths)

    def diameters(self):
        M = self.M
        out = np.empty(M ** self.level)
        for a in range(M):
            d = kernels.path_diameters(self.paths[a])
            d[np.isnan(self.paths[a]).any(axis=1)] = np.nan
            out[np.arange(self.paths[a].shape[0]) * M + a] = d
        return out


def _split_index(idx, n, d):
    """Product word indices (base d^2) -> factor word indices (base d)."""
    idx = np.asarray(idx, dtype=np.int64)
    i1 = np.zeros_like(idx)
    i2 = np.zeros_like(idx)
    rem = idx.copy()
    for k in range(n):
        sym = rem % (d * d)
        rem //= d * d
        i1 += (sym // d) * d ** k
        i2 += (sym % d) * d ** k
    return i1, i2


class CodingTree:
    """Compatible labelings of iterated preimages of a base point.

    Build with ``CodingTree(f, z, base_paths)`` (level 1), then call
    ``extend()`` or ``extend_to(n)``.
    """

    def __init__(self, f, z, base_paths, keep_paths=False):
        self.f = f
        if isinstance(f, ProductMap):
            z = np.asarray(z, dtype=np.complex128)
            self.z = z
            self.factors = [_FactorTree(f.f1, z[0], base_paths[0], keep_paths),
                            _FactorTree(f.f2, z[1], base_paths[1], keep_paths)]
        else:
            self.z = complex(canonical(z))
            self.factors = [_FactorTree(f, z, base_paths, keep_paths)]
        self.base_paths = base_paths
        self.M = f.n_symbols

    @property
    def level(self):
        return self.factors[0].level

    @property
    def is_product(self):
        return len(self.factors) == 2

    def extend(self):
        for t in self.factors:
            t.extend()
        return self

    def extend_to(self, n):
        while self.level < n:
            self.extend()
        return self

    def nodes_at(self, n):
        """Nodes of level n (n <= current level) in lexicographic word order."""
        if n > self.level:
            raise ValueError(f"level {n} not built (current {self.level})")
        if not self.is_product:
            return self.factors[0].level_nodes[n]
        i1, i2 = _split_index(np.arange(self.M ** n), n, self.f.degree)
        return np.stack([self.factors[0].level_nodes[n][i1], self.factors[1].level_nodes[n][i2]], axis=-1)

    @property
    def nodes(self):
        return self.nodes_at(self.level)

    def failed_words(self, n=None):
        n = self.level if n is None else n
        nodes = self.nodes_at(n)
        bad = np.isnan(nodes) if nodes.ndim == 1 else np.isnan(nodes).any(axis=-1)
        return np.flatnonzero(bad)

    def require_complete(self, n=None):
        bad = self.failed_words(n)
        if bad.size:
            raise IncompleteLevel(f"{bad.size} nodes failed to lift", bad.tolist())

    def node(self, word):
        word = tuple(int(a) for a in word)
        idx = 0
        for a in word:
            idx = idx * self.M + a
        return self.nodes_at(len(word))[idx]

    def path_diameters(self):
        """Diameter of the stored path of every current-level word."""
        if not self.is_product:
            return self.factors[0].diameters()
        n, d = self.level, self.f.degree
        i1, i2 = _split_index(np.arange(self.M ** n), n, d)
        return np.maximum(self.factors[0].diameters()[i1], self.factors[1].diameters()[i2])

    def compatibility_defect(self, n=None):
        """max chordal d(f(z_n(w)), z_{n-1}(shift w)) over level-n words (NaN skipped)."""
        n = self.level if n is None else n
        worst = 0.0
        for t in self.factors:
            cur = t.level_nodes[n]
            prev = t.level_nodes[n - 1]
            img = evaluate(t.f, cur)
            target = prev[np.arange(cur.size) % prev.size]
            dist = chordal_distance(img, target)
            dist = np.atleast_1d(dist)
            if np.any(~np.isnan(dist)):
                worst = max(worst, float(np.nanmax(dist)))
        return worst

    def min_separation(self, n=None):
        """Minimum pairwise distance between level-n nodes (product: max metric)."""
        from scipy.spatial import cKDTree
        n = self.level if n is None else n
        out = np.inf
        for t in self.factors:
            pts = t.level_nodes[n]
            pts = pts[~np.isnan(pts)]
            if pts.size < 2:
                continue
            dist, _ = cKDTree(to_sphere(pts)).query(to_sphere(pts), k=2)
            out = min(out, float(dist[:, 1].min()))
        return out


def build_tree(f, z, base_paths, n):
    return CodingTree(f, z, base_paths).extend_to(n)


# -- branch sampling ------------------------------------------------------------

def _factor_branches(f, base, words, tree=None):
    """Prefix nodes z_j(w[:j]) for j = 1..n of every row of ``words``.

    Column j holds the stored paths P(i, j) of the subwords w[i..j]:
    P(j, j) is the base path of w[j] and P(i, j) is the lift of P(i+1, j)
    started at the endpoint of P(i, j-1). When ``tree`` (a factor tree that
    kept its paths) is given, subwords no longer than its level are looked up
    instead of recomputed; the lookups hold the very same lifts.
    """
    words = np.asarray(words, dtype=np.int64)
    S, n = words.shape
    M = f.degree
    depth = tree.level if tree is not None else 0
    prefix_nodes = np.empty((S, n), dtype=np.complex128)
    prev_ends = np.empty((S, n), dtype=np.complex128)   # endpoints of P(i, j-1)
    sub = np.zeros((S, n), dtype=np.int64)               # index of w[i..j], i >= j-depth+1
    for j in range(n):
        cur_ends = np.empty((S, n), dtype=np.complex128)
        i0 = max(0, j - depth + 1) if depth else j
        if depth:
            sub[:, i0:j] = sub[:, i0:j] * M + words[:, j:j + 1]
            sub[:, j] = words[:, j]
            for i in range(i0, j + 1):
                cur_ends[:, i] = tree.level_nodes[j - i + 1][sub[:, i]]
        for a in np.unique(words[:, j]):
            rows = np.flatnonzero(words[:, j] == a)
            if depth:
                length = j - i0 + 1
                paths_a = tree.level_paths[length][a]
                path = paths_a[sub[rows, i0] // M]
            else:
                path = np.broadcast_to(base[a].points, (rows.size, len(base[a]))).copy()
                cur_ends[rows, j] = path[:, -1]
            for i in range(i0 - 1, -1, -1):
                path, _ = _lift_rows(f, path, prev_ends[rows, i])
                cur_ends[rows, i] = path[:, -1]
        prefix_nodes[:, j] = cur_ends[:, 0]
        prev_ends = cur_ends
    return prefix_nodes


def sample_branches(f, base_paths, words, all_prefixes=False, tree=None):
    """z_n(w) for each row w of ``words``, with O(n) memory per word.

    Uses exactly the lifts of the enumerated tree, so the result agrees with
    ``CodingTree.node`` on every word. With ``all_prefixes`` returns the nodes
    of every prefix, shape ``(S, n)`` (``(S, n, 2)`` for products). A
    ``CodingTree`` built with ``keep_paths=True`` may be passed to reuse its
    stored paths for short subwords.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    trees = [None, None]
    if tree is not None:
        if not all(t.keep_paths for t in tree.factors):
            raise ValueError("tree must be built with keep_paths=True")
        trees = tree.factors + [None]
    if isinstance(f, ProductMap):
        d = f.degree
        p1 = _factor_branches(f.f1, base_paths[0], words // d, trees[0])
        p2 = _factor_branches(f.f2, base_paths[1], words % d, trees[1])
        out = np.stack([p1, p2], axis=-1)
        return out if all_prefixes else out[:, -1]
    out = _factor_branches(f, base_paths, words, trees[0])
    return out if all_prefixes else out[:, -1]


def sample_branch(f, base_paths, word):
    return sample_branches(f, base_paths, np.asarray(word)[None, :])[0]


def refinement_distances(f, prefix_nodes):
    """d(z_j, z_{j+1}) along each sampled branch, shape ``(S, n-1)``."""
    p = np.asarray(prefix_nodes)
    if p.ndim == 3:
        return np.maximum(chordal_distance(p[:, :-1, 0], p[:, 1:, 0]),
                          chordal_distance(p[:, :-1, 1], p[:, 1:, 1]))
    return chordal_distance(p[:, :-1], p[:, 1:])


def fit_geometric_rate(ns, values, d):
    """Fit values ~ c * d^(-rho * n) by least squares on logs; returns (c, rho)."""
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v) & (v > 0)
    if keep.sum() < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(ns[keep], np.log(v[keep]), 1)
    return float(np.exp(intercept)), float(-slope / np.log(d))


def branch_rates(distances, d, start=1):
    """Per-branch geometric refinement rate rho_hat from successive distances."""
    S, m = distances.shape
    ns = np.arange(start, start + m, dtype=float)
    logs = np.log(np.maximum(distances, 1e-300))
    nc = ns - ns.mean()
    slopes = (logs - logs.mean(axis=1, keepdims=True)) @ nc / (nc @ nc)
    return -slopes / np.log(d)


# -- diagnostics ----------------------------------------------------------------

@dataclass
class LevelDiagnostics:
    """Stored-path diameters at one level and the classified bad set B_n."""

    level: int
    diameters: np.ndarray = field(repr=False)
    threshold: float
    bad: np.ndarray = field(repr=False)
    card_bad: int
    card_bound: float
    card_ok: bool
    bad_mass: Optional[float] = None
    mass_bound: Optional[float] = None
    mass_ok: Optional[bool] = None
    tau: Optional[float] = None

    @property
    def card_good(self):
        return self.diameters.size - self.card_bad


def level_diameter_stats(tree, theta, c=1.0, rho=0.0, potential=None, c_tau=1.0):
    """Diameters of current-level stored paths and the bad set B_n.

    B_n holds the words whose stored path is longer than ``c * d^(-rho n)``
    (failed lifts count as bad). Checks Card B_n <= d^(k(n+1)) d^(-theta n)
    and, if a potential is given, nu(B_n) <= c_tau exp(-n tau) with tau the
    admissibility margin of the potential.
    """
    from . import shift

    n = tree.level
    d = tree.f.degree
    k = 2 if tree.is_product else 1
    diam = tree.path_diameters()
    thr = c * float(d) ** (-rho * n)
    bad = np.flatnonzero(~(diam <= thr))
    bound = float(d) ** (k * (n + 1)) * float(d) ** (-theta * n)
    out = LevelDiagnostics(n, diam, thr, bad, int(bad.size), bound, bool(bad.size <= bound))
    if potential is not None:
        masses = shift.cylinder_masses(potential, n)
        tau = shift.tau_theta(potential, d, k, theta).tau
        out.tau = tau
        out.bad_mass = float(masses[bad].sum())
        out.mass_bound = float(c_tau * np.exp(-n * tau))
        out.mass_ok = bool(out.bad_mass <= out.mass_bound)
    return out


def branching_profile(leaves, M):
    """(card, s) for a leaf set: s is the max number of branching nodes on a leaf path."""
    leaves = {tuple(w) for w in leaves}
    if not leaves:
        return 0, 0
    children = {}
    for w in leaves:
        for i in range(len(w)):
            children.setdefault(w[:i], set()).add(w[i])
    s = max(sum(1 for i in range(len(w)) if len(children[w[:i]]) >= 2) for w in leaves)
    return len(leaves), s


def branching_cardinality_check(leaves, M):
    """True iff Card(leaves) <= M^s, s the maximal branching count along a leaf path."""
    card, s = branching_profile(leaves, M)
    return card <= M ** s


def branching_bruteforce(M, depth):
    """Check every nonempty leaf subset of the full M-ary tree of given depth.

    Returns ``(subsets_checked, violations)``.
    """
    import itertools

    words = list(itertools.product(range(M), repeat=depth))
    total = len(words)
    if total > 20:
        raise ValueError("brute force limited to at most 20 leaves")
    violations = 0
    for mask in range(1, 2 ** total):
        subset = [words[i] for i in range(total) if mask >> i & 1]
        if not branching_cardinality_check(subset, M):
            violations += 1
    return 2 ** total - 1, violations


def write_level_csv(tree, path, diameters=None):
    """CSV of the current level: word index, node coordinates, path diameter."""
    nodes = tree.nodes
    diam = tree.path_diameters() if diameters is None else diameters
    with open(path, "w", encoding="utf-8") as fh:
        if nodes.ndim == 1:
            fh.write("word,re,im,diameter\n")
            for i, (z, dm) in enumerate(zip(nodes, diam)):
                fh.write(f"{i},{z.real:.17g},{z.imag:.17g},{dm:.17g}\n")
        else:
            fh.write("word,re1,im1,re2,im2,diameter\n")
            for i, (z, dm) in enumerate(zip(nodes, diam)):
                fh.write(f"{i},{z[0].real:.17g},{z[0].imag:.17g},{z[1].real:.17g},{z[1].imag:.17g},{dm:.17g}\n")
