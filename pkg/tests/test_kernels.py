import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from codingmeasures import coding, kernels, shift
from codingmeasures.dynamics import ComplexPolynomial, RationalMap

BACKENDS = kernels.available_backends()
PY = kernels.get_backend("python")
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")


def both():
    return kernels.get_backend("cython"), PY


def test_selection():
    assert kernels.BACKEND in BACKENDS
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_override():
    env = dict(os.environ, CODINGMEASURES_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from codingmeasures import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def _lift_inputs(seed, rows=12):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))
    f = RationalMap(ComplexPolynomial(rng.normal(size=d + 1) + 1j * rng.normal(size=d + 1)),
                    ComplexPolynomial(rng.normal(size=d) + 1j * rng.normal(size=d)))
    z, paths = coding.choose_base_point(f, rng, 0.02)
    eta = paths[0].points
    from codingmeasures.dynamics import preimages
    starts = preimages(f, eta[0]).points
    return f, np.tile(eta, (starts.size, 1)), starts


@needs_both
@pytest.mark.parametrize("seed", range(6))
def test_lift_batch_equivalent(seed):
    f, eta, starts = _lift_inputs(seed)
    outs = [k.lift_batch(f.pa, f.qa, f.pb, f.qb, coding.CRIT_TOL, eta, starts, coding.STEP_MIN,
                         coding.MAX_NEWTON) for k in both()]
    (oc, sc), (op, sp) = outs
    assert np.array_equal(sc, sp)
    ok = sc == kernels.LIFT_OK
    assert np.max(np.abs(oc[ok] - op[ok]), initial=0.0) <= 1e-12


@needs_both
def test_lift_failure_codes_agree(z2):
    eta = coding.polyline([0.5, -0.5]).points[None, :]
    codes = [k.lift_batch(z2.pa, z2.qa, z2.pb, z2.qb, coding.CRIT_TOL, eta, np.array([np.sqrt(0.5)]),
                          coding.STEP_MIN, coding.MAX_NEWTON)[1][0] for k in both()]
    assert codes[0] == codes[1] != kernels.LIFT_OK


@needs_both
@given(st.integers(0, 2 ** 31 - 1))
def test_path_diameters_equivalent(seed):
    rng = np.random.default_rng(seed)
    paths = rng.normal(size=(4, 30)) + 1j * rng.normal(size=(4, 30))
    paths[0, 3] = np.inf
    a, b = (k.path_diameters(paths) for k in both())
    assert np.max(np.abs(a - b)) <= 1e-14


@needs_both
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 1.0))
def test_bowen_counts_equivalent(seed, r):
    rng = np.random.default_rng(seed)
    orbits = np.exp(2j * np.pi * rng.random((300, 6)))
    refs = rng.choice(300, 20, replace=False)
    a, b = (k.bowen_counts(orbits, refs, r) for k in both())
    assert np.array_equal(a, b)
    assert np.all(np.diff(a, axis=1) <= 0)


@needs_both
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 2))
def test_sampling_kernels_equivalent(seed, m):
    rng = np.random.default_rng(seed)
    pot = shift.FiniteRange(m, 2, rng.normal(size=2 ** m))
    mu = shift.gibbs_measure(pot)
    stat_cdf, cond_cdf = np.cumsum(mu.stat), np.cumsum(mu.cond, axis=1)
    U = rng.random((50, 12))
    a, b = (k.sample_chain(stat_cdf, cond_cdf, 2, mu.order, U) for k in both())
    assert np.array_equal(a, b)
    table = rng.normal(size=4)
    s1, s2 = (k.markov_birkhoff(stat_cdf, cond_cdf, 2, mu.order, table, 2, 10, U) for k in both())
    assert np.max(np.abs(s1 - s2)) <= 1e-12


def test_birkhoff_matches_direct():
    rng = np.random.default_rng(0)
    mu = shift.gibbs_measure(shift.Bernoulli((0.3, 0.7)))
    stat_cdf, cond_cdf = np.cumsum(mu.stat), np.cumsum(mu.cond, axis=1)
    U = rng.random((20, 8))
    words = PY.sample_chain(stat_cdf, cond_cdf, 2, 1, U)
    table = np.array([1.0, -2.0, 0.5, 3.0])
    sums = PY.markov_birkhoff(stat_cdf, cond_cdf, 2, 1, table, 2, 7, U)
    direct = sum(table[words[:, i] * 2 + words[:, i + 1]] for i in range(7))
    assert np.allclose(sums, direct)
