import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from codingmeasures import graph_transform as gt
from codingmeasures.errors import ConditionsViolated, ContainmentDomainError


def quad_map(A=2.0, B=0.5, p=0.003, R=1.0):
    """g = (A x + p y^2, B y + p x y): both components feel the perturbation."""
    return gt.LocalMap(lambda x, y: (A * x + p * y ** 2, B * y + p * x * y), gt.LinearSplit(A, B), R, R)


class TestConditions:
    def test_unperturbed(self):
        c = gt.check_conditions(gt.LinearSplit(2.0, 0.5), 1.0, 0.0, 0.1)
        assert c.gamma == pytest.approx(0.75) and c.a

    def test_large_delta(self):
        c = gt.check_conditions(gt.LinearSplit(2.0, 0.5), 1.0, 0.4, 0.5)
        assert not c.a
        lhs = 1.0 * (1 - 0.75) + 2 * 0.4 * 2 * 0.5
        assert lhs == pytest.approx(1.05)

    @given(st.floats(1.0, 5.0), st.floats(0.0, 1.0), st.floats(1e-3, 2.0))
    def test_zero_B(self, A, gamma0, eps):
        c = gt.check_conditions(gt.LinearSplit(A, 0.0), gamma0, 0.0, eps)
        assert c.a and c.b and c.c and c.d

    def test_singular_A(self):
        with pytest.raises(ConditionsViolated):
            gt.LinearSplit(np.array([[1.0, 0], [0, 0]]), 0.1)

    def test_dominance_required(self):
        with pytest.raises(ConditionsViolated):
            gt.LinearSplit(0.5, 0.6)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            gt.check_conditions(gt.LinearSplit(2.0, 0.5), 1.5, 0.0, 0.1)
        with pytest.raises(ValueError):
            gt.check_conditions(gt.LinearSplit(2.0, 0.5), 1.0, 0.2, 0.1)

    def test_matrix_norms(self):
        s = gt.LinearSplit(np.diag([2.0, 4.0]), np.array([[0.3]]))
        assert s.norm_A_inv == pytest.approx(0.5) and s.gamma == pytest.approx(0.85)


class TestClosedForms:
    def test_linear_zero(self):
        lm = gt.LocalMap.linear(gt.LinearSplit(2.0, 0.5))
        phi = gt.LipGraph.zero(1.0)
        psi, stats = gt.backward_transform(lm, phi, "shrink", 0.1)
        assert np.max(np.abs(psi.values)) == 0.0
        rep = gt.verify_graph(lm, psi, phi, 1.0)
        assert rep.lip == 0.0 and rep.containment_residual == 0.0

    @pytest.mark.parametrize("c", [0.3, -0.8 + 0.2j])
    def test_linear_graph(self, c):
        A, B = 2.0, 0.5
        lm = gt.LocalMap.linear(gt.LinearSplit(A, B))
        phi = gt.LipGraph.linear(c, 1.0)
        psi, _ = gt.backward_transform(lm, phi, "shrink", 0.1)
        y, v = psi.grid_points()
        assert np.max(np.abs(v - c * B / A * y)) <= 1e-12
        assert gt.verify_graph(lm, psi, phi, 1.0).containment_residual <= 1e-10

    def test_quadratic(self):
        A, eps = 2.0, 0.05
        lm = gt.LocalMap(lambda x, y: (A * x + eps * y ** 2, 0.5 * y), gt.LinearSplit(A, 0.5), 1.0, 1.0)
        phi = gt.LipGraph.zero(1.0)
        psi, _ = gt.backward_transform(lm, phi, "shrink", 0.2)
        y, v = psi.grid_points()
        assert np.max(np.abs(v + eps / A * y ** 2)) <= 1e-12
        assert gt.verify_graph(lm, psi, phi, 1.0).containment_residual <= 1e-10

    def test_noise_detected(self):
        lm = gt.LocalMap.linear(gt.LinearSplit(2.0, 0.5))
        phi = gt.LipGraph.zero(1.0)
        psi, _ = gt.backward_transform(lm, phi, "shrink", 0.1)
        noise = 1e-3 * np.random.default_rng(0).normal(size=psi.values.shape)
        bad = gt.LipGraph(psi.radius, 1, 1, values=psi.values + noise)
        assert gt.verify_graph(lm, bad, phi, 1.0).containment_residual > 1e-4

    def test_escape_detected(self):
        lm = gt.LocalMap.linear(gt.LinearSplit(2.0, 0.9))
        psi = gt.LipGraph.zero(1.0)
        with pytest.raises(ContainmentDomainError):
            gt.verify_graph(lm, psi, gt.LipGraph.zero(0.5), 1.0)


class TestTransformProperties:
    @given(st.floats(0.0, 0.01), st.floats(1.5, 4.0), st.floats(0.0, 0.6))
    @settings(max_examples=10)
    def test_residual_contraction_lip(self, p, A, B):
        lm = quad_map(A, B, p)
        cond = gt.check_conditions(lm.split, 1.0, lm.delta, 0.2)
        if not (cond.a and cond.b):
            return
        psi, stats = gt.backward_transform(lm, gt.LipGraph.zero(1.0), "shrink", 0.2, tol=1e-13)
        assert stats.fixed_point_residual <= 1e-13
        assert stats.contraction <= cond.contraction_bound + 1e-6
        assert psi.lip <= cond.lip_bound + 1e-3

    def test_delta_sampled(self):
        lm = quad_map(p=0.01)
        assert lm.delta_sampled and 0 < lm.delta < 0.05

    def test_origin_required(self):
        with pytest.raises(ValueError):
            gt.LocalMap(lambda x, y: (2 * x + 1, 0.5 * y), gt.LinearSplit(2.0, 0.5), 1.0, 1.0)

    def test_zero_B(self):
        lm = gt.LocalMap(lambda x, y: (2 * x + 0.01 * y ** 2, 0.01 * x * y), gt.LinearSplit(2.0, 0.0), 1.0, 1.0)
        psi, stats = gt.backward_transform(lm, gt.LipGraph.zero(1.0), "shrink", 0.1)
        rep = gt.verify_graph(lm, psi, gt.LipGraph.zero(1.0), 1.0)
        assert rep.lip_ok and rep.containment_residual <= 1e-8

    def test_general_mode_domain(self):
        lm = quad_map(B=0.9, p=0.005)
        psi, stats = gt.backward_transform(lm, gt.LipGraph.zero(0.5), "general")
        assert 0 < stats.domain_fraction < 1
        assert psi.radius == 1.0

    def test_block_matrices(self):
        A = np.diag([2.0, 3.0])
        split = gt.LinearSplit(A, 0.5)
        lm = gt.LocalMap(lambda x, y: (x @ A.T + 0.01 * y ** 2, 0.5 * y), split, 1.0, 1.0)
        psi, _ = gt.backward_transform(lm, gt.LipGraph.zero(1.0, k1=2), "shrink", 0.1)
        y, v = psi.grid_points()
        assert np.max(np.abs(v - (-0.01 * y ** 2) / np.array([2.0, 3.0]))) <= 1e-12

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            gt.backward_transform(quad_map(), gt.LipGraph.zero(1.0), "sideways", 0.1)


class TestChain:
    def test_linear_chain(self):
        eps = 0.1
        res = gt.transform_chain([gt.LocalMap.linear(gt.LinearSplit(2.0, 0.5))] * 5, gt.LipGraph.zero(1.0), eps)
        assert np.max(np.abs(res.psi0.values)) == 0.0
        assert np.allclose(res.radii, [math.exp(-i * eps) for i in range(5, -1, -1)])

    def test_perturbed_chain(self):
        lm = quad_map(p=0.003)
        assert lm.delta <= 0.011
        res = gt.transform_chain([lm] * 10, gt.LipGraph.zero(1.0), 0.1)
        assert len(res.log) == 10
        assert all(e["lip"] <= 1.0 and e["containment_residual"] <= 1e-8 for e in res.log)
        assert res.radii[0] == pytest.approx(math.exp(-1.0))

    def test_offset_chain(self):
        R = 1.0
        lm = quad_map(p=0.003)
        phi = gt.LipGraph.constant_plus_linear(R / 2, 0.0, R)
        res = gt.transform_chain([lm] * 6, phi, 0.1, mode="offset")
        radii = res.radii[1:][::-1]
        assert all(e["psi0"] <= r for e, r in zip(res.log, [phi.radius] + radii[:-1]))

    def test_abort_names_step(self):
        good = quad_map(p=0.001)
        # |B| = 1.2 > e^0.1 breaks the radius condition (c)
        bad = gt.LocalMap.linear(gt.LinearSplit(2.0, 1.2))
        with pytest.raises(ConditionsViolated) as err:
            gt.transform_chain([good, bad, good], gt.LipGraph.zero(1.0), 0.1)
        assert err.value.step == 1

    def test_csv(self, tmp_path):
        gt.write_graph_csv(gt.LipGraph.zero(1.0, grid_n=3), tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        # 3 x 3 square grid, 5 points inside the unit disc
        assert lines[0] == "re_y1,im_y1,re_psi1,im_psi1" and len(lines) == 6
