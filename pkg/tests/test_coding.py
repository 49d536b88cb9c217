import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from codingmeasures import coding, shift
from codingmeasures.dynamics import INF, ComplexPolynomial, RationalMap, chordal_distance, evaluate, postcritical_set
from codingmeasures.errors import BasePointRejected, IncompleteLevel, LiftFailed


def random_tree(seed, levels=None):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    num = rng.normal(size=d + 1) + 1j * rng.normal(size=d + 1)
    den = rng.normal(size=d) + 1j * rng.normal(size=d)
    f = RationalMap(ComplexPolynomial(num), ComplexPolynomial(den))
    z, paths = coding.choose_base_point(f, rng, 0.02)
    n = levels or {2: 9, 3: 6, 4: 5}[d]
    return coding.CodingTree(f, z, paths).extend_to(n)


class TestGeometry:
    def test_sphere_roundtrip(self):
        z = np.array([0, 1 + 2j, -3j, INF])
        back = coding.from_sphere(coding.to_sphere(z))
        assert np.allclose(back[:3], z[:3]) and np.isinf(back[3])

    @given(st.complex_numbers(max_magnitude=1e3), st.complex_numbers(max_magnitude=1e3))
    def test_geodesic_steps(self, a, b):
        with np.errstate(over="ignore"):
            anti = -1 / np.conj(b) if b != 0 else INF
        if chordal_distance(a, anti) < 1e-6:
            return  # antipodal pair, geodesic undefined
        p = coding.polyline([a, b])
        assert p.start == a and p.end == b
        assert p.t[0] == 0.0 and p.t[-1] == 1.0
        assert p.max_step() <= coding.STEP_MAX * (1 + 1e-9)


class TestBasePaths:
    def test_detour_from_three(self, z2):
        paths = coding.build_base_paths(z2, 3.0, 0.05, np.random.default_rng(0))
        post = postcritical_set(z2)
        ends = sorted(p.end.real for p in paths)
        assert np.allclose(ends, [-math.sqrt(3), math.sqrt(3)])
        for p in paths:
            assert coding.clearance_of(p.points, post) >= 0.05
        neg = [p for p in paths if p.end.real < 0][0]
        assert np.max(np.abs(neg.points.imag)) > 1e-3   # left the real line: detour

    def test_postcritical_base_rejected(self, cheb):
        with pytest.raises(BasePointRejected):
            coding.build_base_paths(cheb, 2.0, 0.02, np.random.default_rng(0))

    def test_no_detour_from_2i(self, z2):
        paths = coding.build_base_paths(z2, 2j, 0.1, np.random.default_rng(0))
        for p in paths:
            straight = coding.polyline([2j, p.end])
            assert np.array_equal(p.points, straight.points)

    def test_product_pair(self, product_map):
        paths = coding.build_base_paths(product_map, np.array([2.0, 2j]), 0.02, np.random.default_rng(0))
        assert len(paths) == 2 and len(paths[0]) == 2

    def test_random_choice_deterministic(self, cheb):
        z1, _ = coding.choose_base_point(cheb, np.random.default_rng(4), 0.02)
        z2_, _ = coding.choose_base_point(cheb, np.random.default_rng(4), 0.02)
        assert z1 == z2_


class TestLift:
    def test_square_root_branches(self, z2):
        eta = coding.polyline([4.0, 1.0])
        up = coding.lift_path(z2, eta, 2.0)
        down = coding.lift_path(z2, eta, -2.0)
        assert abs(up.end - 1) <= 1e-9 and abs(down.end + 1) <= 1e-9
        assert np.max(chordal_distance(evaluate(z2, up.points), eta.points)) <= 1e-9

    def test_through_critical_value(self, z2):
        eta = coding.polyline([0.5, -0.5])
        with pytest.raises(LiftFailed):
            coding.lift_path(z2, eta, math.sqrt(0.5))

    def test_bad_start(self, z2):
        with pytest.raises(ValueError):
            coding.lift_path(z2, coding.polyline([4.0, 1.0]), 3.0)


class TestTree:
    def test_level_moduli(self, z2, z2_paths):
        tree = coding.CodingTree(z2, 2.0, z2_paths).extend_to(12)
        nodes = tree.nodes
        assert nodes.size == 4096
        assert np.max(np.abs(np.abs(nodes) - 2.0 ** (1 / 4096))) <= 1e-12

    def test_counts_and_compatibility(self, z2_tree):
        for n in range(1, 9):
            assert z2_tree.nodes_at(n).size == 2 ** n
            assert z2_tree.failed_words(n).size == 0
        for n in range(2, 9):
            assert z2_tree.compatibility_defect(n) <= 1e-8
        assert z2_tree.min_separation(8) > 0

    def test_first_level_maps_to_base(self, z2_tree):
        assert np.max(chordal_distance(evaluate(z2_tree.f, z2_tree.nodes_at(1)), 2.0)) <= 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_random_maps_compatible(self, seed):
        tree = random_tree(seed)
        for n in range(2, tree.level + 1):
            assert tree.compatibility_defect(n) <= 1e-8
        assert tree.failed_words().size == 0
        assert tree.min_separation() > 0

    def test_product_tree(self, product_map):
        paths = coding.build_base_paths(product_map, np.array([2.0, 2j]), 0.02, np.random.default_rng(0))
        tree = coding.CodingTree(product_map, np.array([2.0, 2j]), paths).extend_to(4)
        assert tree.nodes.shape == (256, 2)
        assert tree.compatibility_defect() <= 1e-8
        assert np.allclose(np.abs(tree.nodes), 2.0 ** (1 / 16))

    def test_incomplete_level_reported(self, z2, z2_paths):
        tree = coding.CodingTree(z2, 2.0, z2_paths).extend_to(3)
        tree.factors[0].level_nodes[3][5] = np.nan
        with pytest.raises(IncompleteLevel) as err:
            tree.require_complete()
        assert err.value.failed_words == [5]

    def test_csv(self, z2_tree, tmp_path):
        coding.write_level_csv(z2_tree, tmp_path / "level.csv")
        lines = (tmp_path / "level.csv").read_text().splitlines()
        assert lines[0] == "word,re,im,diameter" and len(lines) == 257


class TestSampling:
    def test_agrees_with_tree(self, z2, z2_paths, z2_tree):
        words = np.array([shift.word_from_index(i, 6, 2) for i in range(64)])
        pts = coding.sample_branches(z2, z2_paths, words)
        assert np.max(chordal_distance(pts, z2_tree.nodes_at(6))) <= 1e-9

    def test_prefixes_match_tree(self, z2, z2_paths, z2_tree):
        words = np.random.default_rng(0).integers(0, 2, (50, 8))
        pre = coding.sample_branches(z2, z2_paths, words, all_prefixes=True)
        for j in range(1, 9):
            idx = shift.words_to_indices(words[:, :j], 2)
            assert np.array_equal(pre[:, j - 1], z2_tree.nodes_at(j)[idx])

    def test_hybrid_identical(self, z2, z2_paths, z2_tree):
        words = np.random.default_rng(1).integers(0, 2, (40, 14))
        a = coding.sample_branches(z2, z2_paths, words)
        b = coding.sample_branches(z2, z2_paths, words, tree=z2_tree)
        assert np.array_equal(a, b)

    def test_deterministic(self, z2, z2_paths):
        w = shift.sample_word(shift.Bernoulli((0.5, 0.5)), 10, np.random.default_rng(9))
        a = coding.sample_branch(z2, z2_paths, w)
        b = coding.sample_branch(z2, z2_paths, w)
        assert a == b

    def test_refinement_rates(self, cheb):
        rng = np.random.default_rng(2)
        z, paths = coding.choose_base_point(cheb, rng, 0.02)
        words = shift.sample_words(shift.Bernoulli((0.5, 0.5)), 14, 1000, rng)
        pre = coding.sample_branches(cheb, paths, words, all_prefixes=True)
        rho = coding.branch_rates(coding.refinement_distances(cheb, pre), 2)
        assert np.mean(rho > 0) >= 0.99


class TestDiagnostics:
    def test_generous_threshold(self, z2_tree):
        diag = coding.level_diameter_stats(z2_tree, 0.3, c=10.0, rho=0.0)
        assert diag.card_bad == 0 and diag.card_ok
        assert diag.card_bad + diag.card_good == 2 ** 8

    def test_diameters_shrink(self, z2, z2_paths):
        tree = coding.CodingTree(z2, 2.0, z2_paths)
        ns, med = [], []
        for n in range(1, 13):
            if n > 1:
                tree.extend()
            if n >= 4:
                ns.append(n)
                med.append(np.median(tree.path_diameters()))
        c, rho = coding.fit_geometric_rate(ns, med, 2)
        assert rho > 0 and rho == pytest.approx(1.0, abs=0.05)

    @given(st.floats(0.05, 0.6))
    @settings(max_examples=15)
    def test_mass_bound(self, z2_tree, w):
        # constants fitted to the largest diameters of levels 4..8
        c, rho = fitted_constants(z2_tree)
        pot = shift.Bernoulli((w, 1 - w))
        diag = coding.level_diameter_stats(z2_tree, 0.2, c=c, rho=rho, potential=pot)
        if diag.tau > 0:
            assert diag.mass_ok


_FIT = {}


def fitted_constants(tree):
    if "z2" not in _FIT:
        t = coding.CodingTree(tree.f, tree.z, tree.base_paths)
        ns, big = [], []
        for n in range(1, 9):
            if n > 1:
                t.extend()
            if n >= 4:
                ns.append(n)
                big.append(np.max(t.path_diameters()))
        c, rho = coding.fit_geometric_rate(ns, big, 2)
        _FIT["z2"] = (c * 1.01, rho)
    return _FIT["z2"]


class TestBranching:
    def test_single_path(self):
        assert coding.branching_profile([(0, 1, 1)], 2) == (1, 0)
        assert coding.branching_cardinality_check([(0, 1, 1)], 2)

    def test_full_tree(self):
        leaves = [shift.word_from_index(i, 3, 2) for i in range(8)]
        assert coding.branching_profile(leaves, 2) == (8, 3)

    def test_bruteforce(self):
        assert coding.branching_bruteforce(2, 3) == (255, 0)

    @given(st.integers(2, 3), st.integers(1, 4), st.data())
    def test_random_leaf_sets(self, M, depth, data):
        n = M ** depth
        idx = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=min(n, 30)))
        assert coding.branching_cardinality_check([shift.word_from_index(i, depth, M) for i in idx], M)
