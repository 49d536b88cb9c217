"""Backward graph transform for local holomorphic maps that may be non-invertible.

Coordinates split as (x, y) in C^k1 x C^k2 and g = (g1, g2) with d_0 g
block-diagonal (A, B). Given a Lipschitz graph x = phi(y), the transform finds
psi with g(graph psi) contained in graph phi as the fixed point of

    Lambda_y(x) = A^{-1} [phi(g2(x, y)) - (g1(x, y) - A x)],

which only ever inverts A. Domains are polydiscs (every coordinate modulus
at most R); graphs are sampled on square grids over the real and imaginary
parts of y and interpolated linearly between grid points.
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConditionsViolated, ContainmentDomainError

GRID_POINTS = 33
DELTA_POINTS = 9
FD_STEP = 1e-5
MAX_PAIRS = 10 ** 6
MAX_ITER = 10 ** 4
U_SAMPLES = 17


def opnorm(M):
    """Operator (spectral) norm of a matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=np.complex128))
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


@dataclass(frozen=True)
class LinearSplit:
    """Block-diagonal linear part (A, B) with |B| |A^{-1}| < 1."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.complex128))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.complex128))
        if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
            raise ValueError("A and B must be square")
        if np.linalg.cond(A) > 1e14:
            raise ConditionsViolated("A is not invertible")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.norm_B * self.norm_A_inv >= 1.0:
            raise ConditionsViolated("need |B| < |A^{-1}|^{-1}")

    @property
    def k1(self):
        return self.A.shape[0]

    @property
    def k2(self):
        return self.B.shape[0]

    @property
    def A_inv(self):
        return np.linalg.inv(self.A)

    @property
    def norm_A_inv(self):
        return opnorm(np.linalg.inv(self.A))

    @property
    def norm_B(self):
        return opnorm(self.B)

    @property
    def gamma(self):
        return 1.0 - self.norm_B * self.norm_A_inv


@dataclass(frozen=True)
class Conditions:
    a: bool
    b: bool
    c: bool
    d: bool
    d_growth: bool
    d_offset: bool
    gamma: float
    contraction_bound: float
    lip_bound: float


def check_conditions(split, gamma0, delta, epsilon):
    """Evaluate the four hypotheses of the backward graph transform.

    (a) gamma0 (1 - gamma) + 2 delta (1 + gamma0) |A^-1| <= 1
    (b) (gamma0 |B| + delta (1 + gamma0)) / (|A^-1|^-1 - delta (1 + gamma0)) <= gamma0
    (c) |B| + 2 delta <= e^eps
    (d) (|B| + 2 delta) e^-eps + delta <= 1 and
        delta (1 + gamma0) <= min((|A^-1|^-1 - gamma0 |B|) / 2, |A^-1|^-1 - 1)

    ``contraction_bound`` is delta (1 + gamma0) |A^-1| and ``lip_bound`` the
    left side of (b).
    """
    if not 0.0 <= gamma0 <= 1.0:
        raise ValueError("gamma0 must lie in [0, 1]")
    if not delta < epsilon:
        raise ValueError("need delta < epsilon")
    ai = split.norm_A_inv
    b = split.norm_B
    g = split.gamma
    s = delta * (1.0 + gamma0)
    cond_a = gamma0 * (1.0 - g) + 2.0 * s * ai <= 1.0
    den = 1.0 / ai - s
    lip = (gamma0 * b + s) / den if den > 0 else np.inf
    cond_b = bool(den > 0 and lip <= gamma0)
    cond_c = b + 2.0 * delta <= np.exp(epsilon)
    d1 = (b + 2.0 * delta) * np.exp(-epsilon) + delta <= 1.0
    d2 = s <= min((1.0 / ai - gamma0 * b) / 2.0, 1.0 / ai - 1.0)
    return Conditions(bool(cond_a), cond_b, bool(cond_c), bool(d1 and d2), bool(d1), bool(d2),
                      float(g), float(s * ai), float(lip))


# -- grids -------------------------------------------------------------------------

def _grid(radius, k2, n):
    """Square grid over the real and imaginary parts of y in [-R, R]^(2 k2)."""
    axes = [np.linspace(-radius, radius, n)] * (2 * k2)
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = [m.ravel() for m in mesh]
    y = np.stack([flat[2 * i] + 1j * flat[2 * i + 1] for i in range(k2)], axis=1)
    return axes, y


def _inside(y, radius):
    return np.all(np.abs(y) <= radius * (1 + 1e-12), axis=1)


@dataclass
class LipGraph:
    """A graph x = phi(y) over the polydisc of radius ``radius`` in C^k2.

    Either analytic (``func``) or sampled on a square grid (``values`` at the
    grid points, interpolated linearly with extrapolation).
    """

    radius: float
    k1: int
    k2: int
    func: Optional[Callable] = None
    grid_n: int = GRID_POINTS
    values: Optional[np.ndarray] = field(default=None, repr=False)
    lip: float = float("nan")
    domain_mask: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.func is None and self.values is None:
            raise ValueError("need a function or grid values")
        self._interp = None
        if self.values is not None:
            axes, _ = _grid(self.radius, self.k2, self.grid_n)
            vals = np.asarray(self.values, dtype=np.complex128).reshape((self.grid_n,) * (2 * self.k2) + (self.k1,))
            data = np.concatenate([vals.real, vals.imag], axis=-1)
            self._interp = RegularGridInterpolator(axes, data, method="linear", bounds_error=False,
                                                   fill_value=None)
        if np.isnan(self.lip):
            self.lip = self.measure_lip()

    @classmethod
    def zero(cls, radius, k1=1, k2=1, grid_n=GRID_POINTS):
        return cls(radius, k1, k2, func=lambda y: np.zeros((y.shape[0], k1), dtype=np.complex128), grid_n=grid_n)

    @classmethod
    def linear(cls, C, radius, grid_n=GRID_POINTS):
        """phi(y) = C y for a k1 x k2 matrix C."""
        C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
        return cls(radius, C.shape[0], C.shape[1], func=lambda y: y @ C.T, grid_n=grid_n)

    @classmethod
    def constant_plus_linear(cls, c0, C, radius, grid_n=GRID_POINTS):
        c0 = np.atleast_1d(np.asarray(c0, dtype=np.complex128))
        C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
        return cls(radius, C.shape[0], C.shape[1], func=lambda y: c0[None, :] + y @ C.T, grid_n=grid_n)

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
        if self.func is not None:
            return np.atleast_2d(np.asarray(self.func(y), dtype=np.complex128)).reshape(y.shape[0], self.k1)
        pts = np.empty((y.shape[0], 2 * self.k2))
        pts[:, 0::2] = y.real
        pts[:, 1::2] = y.imag
        out = self._interp(pts)
        return out[:, :self.k1] + 1j * out[:, self.k1:]

    def grid_points(self):
        """Grid points inside the domain with the graph values there."""
        _, y = _grid(self.radius, self.k2, self.grid_n)
        inside = _inside(y, self.radius)
        if self.domain_mask is not None:
            inside = inside & self.domain_mask
        if self.values is not None:
            vals = np.asarray(self.values).reshape(-1, self.k1)[inside]
        else:
            vals = self(y[inside])
        return y[inside], vals

    def value_at_zero(self):
        return self(np.zeros((1, self.k2)))[0]

    def measure_lip(self, max_pairs=MAX_PAIRS, seed=0):
        """Max |phi(y) - phi(y')| / |y - y'| over grid pairs (subsampled beyond max_pairs)."""
        y, v = self.grid_points()
        return pair_lipschitz(y, v, max_pairs, seed)


def pair_lipschitz(y, v, max_pairs=MAX_PAIRS, seed=0):
    N = y.shape[0]
    if N < 2:
        return 0.0
    total = N * (N - 1) // 2
    if total <= max_pairs:
        best = 0.0
        for i in range(N - 1):
            dy = np.linalg.norm(y[i + 1:] - y[i], axis=1)
            dv = np.linalg.norm(v[i + 1:] - v[i], axis=1)
            best = max(best, float(np.max(dv / dy)))
        return best
    rng = np.random.default_rng(seed)
    i = rng.integers(0, N, max_pairs)
    j = rng.integers(0, N, max_pairs)
    keep = i != j
    dy = np.linalg.norm(y[i[keep]] - y[j[keep]], axis=1)
    dv = np.linalg.norm(v[i[keep]] - v[j[keep]], axis=1)
    return float(np.max(dv / dy))


# -- local maps ---------------------------------------------------------------------

@dataclass
class LocalMap:
    """g = (g1, g2): D^k(R0) -> D^k(R1) with g(0) = 0 and d_0 g = (A, B).

    ``g(x, y)`` takes arrays of shapes (N, k1), (N, k2) and returns the pair
    (g1, g2) of the same shapes. If ``delta`` is not given it is certified by
    finite-difference Jacobians on a sample grid (sound at the samples only).
    """

    g: Callable
    split: LinearSplit
    R0: float
    R1: float
    delta: Optional[float] = None
    delta_sampled: bool = field(default=False, init=False)

    def __post_init__(self):
        k1, k2 = self.split.k1, self.split.k2
        g1, g2 = self(np.zeros((1, k1)), np.zeros((1, k2)))
        if max(np.abs(g1).max(), np.abs(g2).max()) > 1e-12:
            raise ValueError("local map must fix the origin")
        if self.delta is None:
            self.delta = self.certify_delta()
            self.delta_sampled = True

    def __call__(self, x, y):
        g1, g2 = self.g(np.asarray(x, dtype=np.complex128), np.asarray(y, dtype=np.complex128))
        return np.asarray(g1, dtype=np.complex128), np.asarray(g2, dtype=np.complex128)

    @classmethod
    def linear(cls, split, R0=1.0, R1=None):
        A, B = split.A, split.B
        return cls(lambda x, y: (x @ A.T, y @ B.T), split, R0, R0 if R1 is None else R1, 0.0)

    def jacobian(self, w, h=FD_STEP):
        """Central finite-difference complex Jacobians at points w of shape (N, k)."""
        k1, k = self.split.k1, self.split.k1 + self.split.k2
        w = np.atleast_2d(np.asarray(w, dtype=np.complex128))
        J = np.empty((w.shape[0], k, k), dtype=np.complex128)
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            a1, a2 = self(w[:, :k1] + e[:k1], w[:, k1:] + e[k1:])
            b1, b2 = self(w[:, :k1] - e[:k1], w[:, k1:] - e[k1:])
            J[:, :, j] = np.concatenate([a1 - b1, a2 - b2], axis=1) / (2 * h)
        return J

    def sample_points(self, per_coord=DELTA_POINTS):
        """Per complex coordinate: 0 and 8 points on radii R0/2 and R0; product grid."""
        ang = np.exp(0.5j * np.pi * np.arange(4))
        coord = np.concatenate([[0.0], 0.5 * self.R0 * ang, self.R0 * ang * np.exp(0.25j * np.pi)])
        coord = coord[:per_coord]
        k = self.split.k1 + self.split.k2
        return np.array(list(itertools.product(coord, repeat=k)), dtype=np.complex128)

    def certify_delta(self):
        """max |d_w g - d_0 g| over the sample grid."""
        w = self.sample_points()
        J = self.jacobian(w)
        J0 = self.jacobian(np.zeros((1, w.shape[1])))[0]
        return float(max(opnorm(Jw - J0) for Jw in J))


# -- transform ------------------------------------------------------------------------

@dataclass
class TransformStats:
    iterations: int
    contraction: float
    fixed_point_residual: float
    domain_fraction: float


def _u_directions(k1, m=U_SAMPLES - 1):
    if k1 == 1:
        return np.exp(2j * np.pi * np.arange(m) / m)[:, None]
    rng = np.random.default_rng(0)
    v = rng.standard_normal((m, k1)) + 1j * rng.standard_normal((m, k1))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _general_domain(local_map, phi, y):
    """Keep y if g2 of 0 and 16 points with |x| = |y| all land in phi's domain."""
    k1 = local_map.split.k1
    keep = np.ones(y.shape[0], dtype=bool)
    norms = np.linalg.norm(y, axis=1)
    dirs = np.vstack([np.zeros((1, k1)), _u_directions(k1)])
    for dvec in dirs:
        x = dvec[None, :] * norms[:, None]
        _, g2 = local_map(x, y)
        keep &= _inside(g2, phi.radius)
    return keep


def backward_transform(local_map, phi, mode="shrink", epsilon=None, tol=1e-13,
                       grid_n=GRID_POINTS, max_iter=MAX_ITER):
    """Graph psi with g(graph psi) inside graph phi, by iterating Lambda_y from x = 0.

    Modes: ``general`` (domain U inside D(R0) found by sampling the segments
    L(y)), ``shrink`` and ``offset`` (domain D(R e^-eps), R the radius of
    phi). Returns ``(psi, stats)``.

    Raises
    ------
    ConditionsViolated
        If successive iterates ever fail to contract at some y, or the
        iteration cap is reached.
    """
    split = local_map.split
    k1, k2 = split.k1, split.k2
    if mode == "general":
        radius = local_map.R0
    elif mode in ("shrink", "offset"):
        if epsilon is None:
            raise ValueError(f"mode {mode} needs epsilon")
        radius = phi.radius * np.exp(-epsilon)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _, y = _grid(radius, k2, grid_n)
    inside = _inside(y, radius)
    if mode == "general":
        inside &= _general_domain(local_map, phi, y)
    Ainv = split.A_inv
    A = split.A
    x = np.zeros((y.shape[0], k1), dtype=np.complex128)
    prev_step = None
    contraction = 0.0
    scale = max(radius, 1e-300)
    for it in range(1, max_iter + 1):
        g1, g2 = local_map(x, y)
        xn = (phi(g2) - (g1 - x @ A.T)) @ Ainv.T
        step = np.linalg.norm(xn - x, axis=1)
        if prev_step is not None:
            meas = inside & (prev_step > 1e-9 * scale)
            if meas.any():
                ratio = float(np.max(step[meas] / prev_step[meas]))
                contraction = max(contraction, ratio)
                if ratio >= 1.0:
                    raise ConditionsViolated(f"Lambda_y failed to contract (ratio {ratio:.3g})")
        x = xn
        prev_step = step
        if np.all(step[inside] <= tol):
            break
    else:
        raise ConditionsViolated(f"fixed-point iteration hit the cap of {max_iter}")
    g1, g2 = local_map(x, y)
    resid = np.linalg.norm((phi(g2) - (g1 - x @ A.T)) @ Ainv.T - x, axis=1)
    psi = LipGraph(radius, k1, k2, grid_n=grid_n, values=x.copy(),
                   domain_mask=inside if mode == "general" else None)
    stats = TransformStats(it, contraction, float(resid[inside].max()) if inside.any() else 0.0,
                           float(inside.mean()))
    return psi, stats


@dataclass
class GraphReport:
    lip: float
    lip_ok: bool
    containment_residual: float
    containment_ok: bool
    psi0: float
    psi0_ok: Optional[bool]


def verify_graph(local_map, psi, phi, gamma0, tol=1e-10, psi0_bound=None):
    """Check Lip psi <= gamma0 and g(graph psi) inside graph phi on psi's grid.

    The containment residual is max |g1(psi(y), y) - phi(g2(psi(y), y))|.

    Raises
    ------
    ContainmentDomainError
        If some g2-image leaves the domain of phi.
    """
    y, v = psi.grid_points()
    lip = pair_lipschitz(y, v)
    g1, g2 = local_map(v, y)
    if not np.all(_inside(g2, phi.radius)):
        raise ContainmentDomainError("g2 image escapes the domain of phi")
    res = float(np.max(np.linalg.norm(g1 - phi(g2), axis=1))) if y.shape[0] else 0.0
    p0 = float(np.linalg.norm(psi.value_at_zero()))
    p0_ok = None if psi0_bound is None else bool(p0 <= psi0_bound * (1 + 1e-12))
    return GraphReport(lip, bool(lip <= gamma0 * (1 + 1e-9) + 1e-12), res, bool(res <= tol), p0, p0_ok)


@dataclass
class ChainResult:
    psi0: LipGraph
    radii: List[float]
    log: List[dict]


def transform_chain(maps, phi_n, epsilon, gamma0=1.0, mode="shrink", tol=1e-13,
                    containment_tol=1e-8, grid_n=GRID_POINTS):
    """Pull phi_n back through maps[n-1], ..., maps[0].

    Each step shrinks the radius by e^-eps and is verified. The log holds one
    entry per step: {step, radius, lip, containment_residual}.

    Raises
    ------
    ConditionsViolated
        If a map fails the conditions required by ``mode`` (the message and
        ``step`` attribute name the offending index).
    """
    phi = phi_n
    radii = [phi.radius]
    log = []
    for i in range(len(maps) - 1, -1, -1):
        lm = maps[i]
        cond = check_conditions(lm.split, gamma0, lm.delta, epsilon)
        need = [cond.a, cond.b, cond.c] if mode == "shrink" else [cond.a, cond.b, cond.d]
        if not all(need):
            err = ConditionsViolated(f"step {i}: conditions fail ({cond})")
            err.step = i
            raise err
        psi, stats = backward_transform(lm, phi, mode, epsilon, tol, grid_n)
        rep = verify_graph(lm, psi, phi, gamma0, containment_tol,
                           psi0_bound=phi.radius if mode == "offset" else None)
        log.append({"step": i, "radius": psi.radius, "lip": rep.lip,
                    "containment_residual": rep.containment_residual,
                    "iterations": stats.iterations, "contraction": stats.contraction,
                    "psi0": rep.psi0})
        if not (rep.lip_ok and rep.containment_ok) or rep.psi0_ok is False:
            err = ConditionsViolated(f"step {i}: verification failed ({rep})")
            err.step = i
            raise err
        radii.append(psi.radius)
        phi = psi
    return ChainResult(phi, radii[::-1], log)


def write_graph_csv(graph, path):
    """CSV of the graph on its grid: y coordinates then psi values."""
    y, v = graph.grid_points()
    with open(path, "w", encoding="utf-8") as fh:
        cols = [f"re_y{i + 1},im_y{i + 1}" for i in range(graph.k2)]
        cols += [f"re_psi{i + 1},im_psi{i + 1}" for i in range(graph.k1)]
        fh.write(",".join(cols) + "\n")
        for yy, vv in zip(y, v):
            parts = [f"{c.real:.17g},{c.imag:.17g}" for c in np.concatenate([yy, vv])]
            fh.write(",".join(parts) + "\n")


__all__ = ["LinearSplit", "LocalMap", "LipGraph", "Conditions", "check_conditions",
           "backward_transform", "verify_graph", "transform_chain", "opnorm"]
