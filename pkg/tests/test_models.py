"""Model builders: structure axioms, frames, brackets, serialization."""

import numpy as np
import pytest

from kenmotsu3.fields import constant_vector_field, lie_bracket
from kenmotsu3.identities import SamplePlan
from kenmotsu3.models import (
    DarbouxParams,
    KmuChartParams,
    KmupChartParams,
    build_darboux_model,
    build_kenmotsu_baseline,
    build_kmu_chart_model,
    build_kmu_prime_chart_model,
    model_from_json,
    model_to_json,
    parse_box,
)
from kenmotsu3.structure import (
    compute_h,
    compute_h_prime,
    eigenframe,
    fundamental_two_form,
    structure_residuals,
)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])


def sample(model, grid=3, seed=9):
    return SamplePlan(grid=grid, seed=seed).points(model)


class TestKmuChart:
    def test_structure_axioms(self):
        m = build_kmu_chart_model(KmuChartParams(mu="z+1", f="sin(z)", r="1"))
        res = structure_residuals(m, sample(m))
        assert max(res.values()) < 1e-12, res

    def test_unit_reeb(self):
        m = build_kmu_chart_model(KmuChartParams())
        pts = sample(m)
        g = m.g(pts)
        xi = m.xi(pts)
        assert np.allclose(np.einsum("ni,nij,nj->n", xi, g, xi), 1.0, atol=1e-12)
        assert np.max(np.abs(np.einsum("nij,nj->ni", m.phi(pts), xi))) < 1e-12

    def test_nominal_k_is_z(self):
        m = build_kmu_chart_model(KmuChartParams())
        assert m.k_nom(np.array([0.0, 0.0, -2.0])) == -2.0

    def test_bracket_e1_xi(self):
        # [e1, e3] = e1 - (lam - mu/2) e2 = e1 - e2 at z=-2 with mu=0
        m = build_kmu_chart_model(KmuChartParams())
        br = lie_bracket(constant_vector_field(E1, m.domain), m.xi,
                         np.array([0.0, 0.0, -2.0]))
        assert np.allclose(br, [1.0, -1.0, 0.0], atol=1e-6)

    def test_bracket_e1_e2_commute(self):
        m = build_kmu_chart_model(KmuChartParams(mu="1"))
        br = lie_bracket(constant_vector_field(E1, m.domain),
                         constant_vector_field(E2, m.domain),
                         np.array([0.4, 0.7, -2.3]))
        assert np.max(np.abs(br)) < 1e-8

    def test_h_eigenvalues(self):
        # h e1 = lam e1 with lam = sqrt(-1-z) = 1 at z = -2
        m = build_kmu_chart_model(KmuChartParams())
        h = compute_h(m, np.array([0.0, 0.0, -2.0]))
        assert np.allclose(h @ E1, E1, atol=1e-6)
        assert np.allclose(h @ E2, -E2, atol=1e-6)

    def test_box_validation(self):
        with pytest.raises(ValueError, match="z <= -1"):
            build_kmu_chart_model(KmuChartParams(
                box=((0, 1), (0, 1), (-2.0, -0.5))))


class TestKmupChart:
    def test_h_prime_eigenvalues_at_z_minus5(self):
        m = build_kmu_prime_chart_model(KmupChartParams())
        hp = compute_h_prime(m, np.array([0.0, 0.0, -5.0]))
        assert np.allclose(hp @ E1, 2.0 * E1, atol=1e-6)
        assert np.allclose(hp @ E2, -2.0 * E2, atol=1e-6)

    def test_bracket_e2_xi_vanishes_at_lam_one(self):
        # [e2, e3] = (1 - lam) e2 = 0 at z = -2
        m = build_kmu_prime_chart_model(KmupChartParams())
        br = lie_bracket(constant_vector_field(E2, m.domain), m.xi,
                         np.array([0.0, 0.0, -2.0]))
        assert np.max(np.abs(br)) < 1e-6

    def test_frame_orthonormal(self):
        m = build_kmu_prime_chart_model(KmupChartParams(mu="-1", f="z", r="2"))
        pts = sample(m)
        g = m.g(pts)
        xi = m.xi(pts)
        frame = np.stack([np.broadcast_to(E1, xi.shape),
                          np.broadcast_to(E2, xi.shape), xi], axis=2)
        gram = np.einsum("nia,nij,njb->nab", frame, g, frame)
        assert np.max(np.abs(gram - np.eye(3))) < 1e-12

    def test_mu_minus_two_rejected(self):
        with pytest.raises(ValueError, match="vanishes"):
            build_kmu_prime_chart_model(KmupChartParams(mu="-2"))

    def test_structure_axioms(self):
        m = build_kmu_prime_chart_model(KmupChartParams(mu="cos(z)"))
        assert max(structure_residuals(m, sample(m)).values()) < 1e-12


class TestDarboux:
    def test_g_identity_block_at_zero(self):
        m = build_darboux_model(DarbouxParams("kmu", "1", (-0.5, 0.5)))
        g = m.g(np.array([0.3, 0.4, 0.0]))
        assert np.allclose(g, np.eye(3), atol=1e-15)

    def test_phi12_at_zero(self):
        m = build_darboux_model(DarbouxParams("kmu", "0", (-0.5, 0.5)))
        val = fundamental_two_form(m, np.array([0.0, 0.0, 0.0]), E1, E2)
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_phi12_exponential(self):
        m = build_darboux_model(DarbouxParams("kmu", "1", (-1.0, 1.0)))
        val = fundamental_two_form(m, np.array([0.0, 0.0, 0.5]), E1, E2)
        assert val == pytest.approx(np.exp(1.0), abs=1e-9)

    def test_h_at_zero_is_minus_m3_block(self):
        m = build_darboux_model(DarbouxParams("kmu", "sin(t)", (-0.5, 0.5)))
        h = compute_h(m, np.array([0.0, 0.0, 0.0]))
        assert np.allclose(h[:2, :2], np.array([[0.0, -1.0], [-1.0, 0.0]]),
                           atol=1e-6)
        assert np.max(np.abs(h[2, :])) < 1e-9

    def test_h_matches_trajectory_h(self):
        m = build_darboux_model(DarbouxParams("kmu", "1", (-0.5, 0.5)))
        ts = np.array([-0.5, -0.25, 0.0, 0.25, 0.5])
        pts = np.stack([np.zeros(5), np.zeros(5), ts], axis=1)
        h = compute_h(m, pts)
        states = m.trajectory.dense(ts)
        from kenmotsu3.ode import M1, M2, M3
        hmat = (states[:, 3, None, None] * M1 + states[:, 4, None, None] * M2
                + states[:, 5, None, None] * M3)
        assert np.max(np.abs(h[:, :2, :2] - hmat)) < 1e-6

    def test_kmup_mu_minus_two_constant_k(self):
        m = build_darboux_model(DarbouxParams("kmup", "-2", (-1.0, 1.0)))
        ts = np.stack([np.zeros(5), np.zeros(5),
                       np.linspace(-1, 1, 5)], axis=1)
        assert np.max(np.abs(m.lam_nom(ts) - 1.0)) <= 1e-12
        assert np.max(np.abs(m.k_nom(ts) + 2.0)) <= 1e-12

    def test_structure_axioms(self):
        for variant, mu in (("kmu", "1"), ("kmup", "0")):
            m = build_darboux_model(DarbouxParams(variant, mu, (-0.5, 0.5)))
            res = structure_residuals(m, sample(m))
            assert max(res.values()) < 1e-9, (variant, res)

    def test_eigen_lambda_at_zero(self):
        m = build_darboux_model(DarbouxParams("kmu", "1", (-0.5, 0.5)))
        ef = eigenframe(m, np.array([[0.0, 0.0, 0.0]]))
        assert ef.lam[0] == pytest.approx(1.0, abs=1e-6)


class TestBaseline:
    def test_h_vanishes(self):
        m = build_kenmotsu_baseline(1.0)
        h = compute_h(m, np.array([0.3, -0.4, 0.2]))
        assert np.max(np.abs(h)) < 1e-8

    def test_structure_axioms(self):
        m = build_kenmotsu_baseline(2.5)
        assert max(structure_residuals(m, sample(m)).values()) < 1e-12

    def test_positive_c_required(self):
        with pytest.raises(ValueError):
            build_kenmotsu_baseline(0.0)


class TestDkWedgeEta:
    def test_chart_models_exact(self):
        # k depends only on z and eta is proportional to dz, so dk ^ eta = 0
        # holds to strict tolerance by construction
        from kenmotsu3.identities import check_identity
        for m in (build_kmu_chart_model(KmuChartParams(mu="1")),
                  build_kmu_prime_chart_model(KmupChartParams(mu="1"))):
            rep = check_identity(m, "DK_ETA", SamplePlan(grid=3, seed=4))
            assert rep.residual <= 1e-12, m.family


class TestSerialization:
    def test_roundtrip_chart(self):
        m = build_kmu_chart_model(KmuChartParams(mu="z+1", f="0", r="1"))
        doc = model_to_json(m)
        m2 = model_from_json(doc)
        pts = sample(m)
        assert np.array_equal(m.g(pts), m2.g(pts))

    def test_roundtrip_darboux_nodes_identical(self):
        m = build_darboux_model(DarbouxParams("kmup", "1", (-0.25, 0.25)))
        doc = model_to_json(m)
        assert "trajectory" in doc
        m2 = model_from_json(doc)
        assert np.array_equal(np.asarray(doc["trajectory"]["states"]),
                              m2.trajectory.states)

    def test_parse_box(self):
        assert parse_box("0,1:0,1:-3,-1.5") == ((0, 1), (0, 1), (-3, -1.5))
        with pytest.raises(ValueError):
            parse_box("0,1:0,1")
        with pytest.raises(ValueError):
            parse_box("1,0:0,1:-3,-1.5")
