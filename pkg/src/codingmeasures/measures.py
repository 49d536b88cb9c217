"""Atomic approximations of the coded measure and their diagnostics.

``pushforward_measure`` puts the mass of each n-cylinder on the tree node of
that word. ``sample_cloud`` draws words from the Gibbs measure and returns the
corresponding nodes, which is the same measure seen through Monte-Carlo.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import shift
from .coding import from_sphere, sample_branches, to_sphere
from .dynamics import ProductMap, chordal_distance, evaluate


@dataclass
class AtomicMeasure:
    """Finite weighted point set; ``points`` is (N,) complex or (N, 2) for products."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.complex128)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.shape[0] != self.weights.size:
            raise ValueError("points and weights differ in length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def is_product(self):
        return self.points.ndim == 2

    def total(self):
        return float(np.sum(self.weights))

    def integrate(self, values):
        """Integral of per-atom values (N,) or (N, F) -> scalar or (F,)."""
        return self.weights @ np.asarray(values)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            if self.is_product:
                fh.write("re1,im1,re2,im2,weight\n")
                for p, w in zip(self.points, self.weights):
                    fh.write(f"{p[0].real:.17g},{p[0].imag:.17g},{p[1].real:.17g},{p[1].imag:.17g},{w:.17g}\n")
            else:
                fh.write("re,im,weight\n")
                for p, w in zip(self.points, self.weights):
                    fh.write(f"{p.real:.17g},{p.imag:.17g},{w:.17g}\n")


@dataclass
class SampleCloud(AtomicMeasure):
    """Equally weighted nodes z_n(w) of words w drawn from a Gibbs measure."""

    depth: int = 0
    seed: Optional[int] = None
    words: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_points(cls, points, depth=0, seed=None, words=None):
        points = np.asarray(points, dtype=np.complex128)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n) if n else np.zeros(0), depth, seed, words)


def pushforward_measure(tree, n, potential):
    """Atoms at the level-n nodes with the Gibbs masses of their words.

    Raises ``IncompleteLevel`` (listing the failed words) if some lift failed.
    """
    tree.require_complete(n)
    if tree.M != potential.alphabet:
        raise ValueError(f"potential has {potential.alphabet} symbols, map needs {tree.M}")
    return AtomicMeasure(tree.nodes_at(n), shift.cylinder_masses(potential, n))


def sample_cloud(f, base_paths, potential, n, count, rng, tree=None, seed=None):
    """Draw ``count`` words of length n from the Gibbs measure and code them.

    If ``tree`` already holds level n its nodes are looked up; otherwise the
    branches are computed (reusing any paths the tree kept).
    """
    words = shift.sample_words(potential, n, count, rng)
    if tree is not None and tree.level >= n:
        idx = shift.words_to_indices(words, tree.M)
        pts = tree.nodes_at(n)[idx]
    else:
        use = tree if tree is not None and all(t.keep_paths for t in tree.factors) else None
        pts = sample_branches(f, base_paths, words, tree=use)
    return SampleCloud.from_points(pts, n, seed, words)


# -- test functions --------------------------------------------------------------

@dataclass(frozen=True)
class TestFamily:
    """Fixed dictionary of bounded-on-compacts test functions.

    Re and Im of z^m for m = 1..max_power (0 at infinity) and ``n_bumps``
    Lipschitz bumps max(0, 1 - d(z, c)/r) with seeded random centres and
    radii. For products the power functions act on each factor and the bumps
    use the max metric.
    """

    __test__ = False

    max_power: int = 6
    n_bumps: int = 20
    seed: int = 0

    def _bumps(self, dim):
        rng = np.random.default_rng(self.seed)
        centres = from_sphere(rng.standard_normal((self.n_bumps * dim, 3))).reshape(self.n_bumps, dim)
        radii = rng.uniform(0.2, 1.0, self.n_bumps)
        return centres, radii

    def names(self, dim=1):
        out = []
        for k in range(dim):
            sfx = "" if dim == 1 else f"_{k + 1}"
            for m in range(1, self.max_power + 1):
                out += [f"re_z{m}{sfx}", f"im_z{m}{sfx}"]
        return out + [f"bump{i}" for i in range(self.n_bumps)]

    def __call__(self, points):
        pts = np.asarray(points, dtype=np.complex128)
        dim = 1 if pts.ndim == 1 else pts.shape[1]
        cols = pts[:, None] if dim == 1 else pts
        out = []
        for k in range(dim):
            z = cols[:, k]
            fin = np.isfinite(z)
            zf = np.where(fin, z, 0.0)
            for m in range(1, self.max_power + 1):
                zm = np.where(fin, zf ** m, 0.0)
                out += [zm.real, zm.imag]
        centres, radii = self._bumps(dim)
        for i in range(self.n_bumps):
            dist = np.max([chordal_distance(cols[:, k], centres[i, k]) for k in range(dim)], axis=0)
            out.append(np.maximum(0.0, 1.0 - np.atleast_1d(dist) / radii[i]))
        return np.stack(out, axis=1) if pts.shape[0] else np.zeros((0, len(out)))


DEFAULT_FAMILY = TestFamily()


def invariance_defect(f, nu_next, nu, family=DEFAULT_FAMILY):
    """max over the family of |int psi o f d nu_next - int psi d nu|."""
    a = nu_next.integrate(family(evaluate(f, nu_next.points)))
    b = nu.integrate(family(nu.points))
    return float(np.max(np.abs(a - b)))


def convergence_diagnostic(mu, nu, family=DEFAULT_FAMILY):
    """max over the family of |int psi d mu - int psi d nu| (weak-topology surrogate)."""
    return float(np.max(np.abs(mu.integrate(family(mu.points)) - nu.integrate(family(nu.points)))))


def moments(measure, max_power=6, factor=0):
    """Integrals of z^m, m = 1..max_power (atoms at infinity contribute 0)."""
    z = measure.points if measure.points.ndim == 1 else measure.points[:, factor]
    fin = np.isfinite(z)
    zf = np.where(fin, z, 0.0)
    return np.array([measure.weights @ np.where(fin, zf ** m, 0.0) for m in range(1, max_power + 1)])


# -- density grids ----------------------------------------------------------------

@dataclass
class DensityGrid:
    """Cell masses over ``window = (xmin, xmax, ymin, ymax)``; ``masses[iy, ix]``."""

    window: Tuple[float, float, float, float]
    masses: np.ndarray
    overflow: float

    @property
    def resolution(self):
        ny, nx = self.masses.shape
        return nx, ny

    def total(self):
        return float(self.masses.sum())

    def to_pgm(self, path, maxval=65535):
        """Plain PGM (P2); the top row is the largest y."""
        m = self.masses[::-1]
        peak = m.max()
        img = np.zeros(m.shape, dtype=np.int64) if peak <= 0 else np.rint(m / peak * maxval).astype(np.int64)
        ny, nx = m.shape
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P2\n{nx} {ny}\n{maxval}\n")
            for row in img:
                fh.write(" ".join(str(v) for v in row) + "\n")

    def to_csv(self, path):
        xmin, xmax, ymin, ymax = self.window
        nx, ny = self.resolution
        xc = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
        yc = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,y,mass\n")
            for iy in range(ny):
                for ix in range(nx):
                    fh.write(f"{xc[ix]:.17g},{yc[iy]:.17g},{self.masses[iy, ix]:.17g}\n")


def _histogram(x, y, w, window, resolution):
    xmin, xmax, ymin, ymax = window
    nx, ny = resolution
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be at least 1 x 1")
    fin = np.isfinite(x) & np.isfinite(y)
    inside = fin & (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
    ix = np.clip(((x[inside] - xmin) / (xmax - xmin) * nx).astype(np.int64), 0, nx - 1)
    iy = np.clip(((y[inside] - ymin) / (ymax - ymin) * ny).astype(np.int64), 0, ny - 1)
    masses = np.bincount(iy * nx + ix, weights=w[inside], minlength=nx * ny).reshape(ny, nx)
    return DensityGrid(tuple(window), masses, float(w[~inside].sum()))


def density_grid(source, window, resolution, factor=0):
    """Mass histogram of a measure in the plane chart (one factor for products)."""
    z = source.points if source.points.ndim == 1 else source.points[:, factor]
    return _histogram(z.real, z.imag, source.weights, window, resolution)


def modulus_grid(source, window, resolution):
    """Joint histogram of (|z|, |w|) for a product measure."""
    a = np.abs(source.points[:, 0])
    b = np.abs(source.points[:, 1])
    return _histogram(a, b, source.weights, window, resolution)


def mass_in_annulus(source, r0, r1, factor=0):
    z = source.points if source.points.ndim == 1 else source.points[:, factor]
    r = np.abs(z)
    return float(source.weights[(r >= r0) & (r <= r1)].sum())


__all__ = ["AtomicMeasure", "SampleCloud", "DensityGrid", "TestFamily", "DEFAULT_FAMILY",
           "pushforward_measure", "sample_cloud", "invariance_defect", "convergence_diagnostic",
           "moments", "density_grid", "modulus_grid", "mass_in_annulus", "to_sphere"]
