"""Finite differences, domains and Lie brackets."""

import numpy as np
import pytest

from kenmotsu3.fields import (
    BoundaryError,
    ChartDomain,
    DiffScheme,
    ScalarField,
    VectorField,
    constant_vector_field,
    coordinate_derivatives,
    lie_bracket,
    partial_derivative,
)
from kenmotsu3.models import KmupChartParams, build_kmu_prime_chart_model

FULL = ChartDomain()
HALF = ChartDomain(((-np.inf, np.inf), (-np.inf, np.inf), (-np.inf, -1.0)))


class TestPartialDerivative:
    def test_quadratic(self):
        f = ScalarField(lambda p: p[:, 2] ** 2, FULL)
        d = partial_derivative(f, np.array([0.0, 0.0, 3.0]), 2)
        assert d == pytest.approx(6.0, abs=1e-9)

    def test_exponential(self):
        f = ScalarField(lambda p: np.exp(2.0 * p[:, 2]), FULL)
        d = partial_derivative(f, np.array([0.0, 0.0, 0.0]), 2)
        assert d == pytest.approx(2.0, abs=1e-8)

    def test_constant(self):
        f = ScalarField(lambda p: np.full(p.shape[0], 7.25), FULL)
        d = partial_derivative(f, np.array([1.0, 2.0, 3.0]), 0)
        assert abs(d) < 1e-12

    def test_batched(self):
        f = ScalarField(lambda p: np.sin(p[:, 0]), FULL)
        pts = np.array([[0.0, 0, 0], [0.5, 0, 0], [1.2, 0, 0]])
        d = partial_derivative(f, pts, 0)
        assert np.allclose(d, np.cos(pts[:, 0]), atol=1e-10)

    def test_one_sided_near_boundary(self):
        f = ScalarField(lambda p: p[:, 2] ** 3, HALF)
        z = -1.0005
        d = partial_derivative(f, np.array([0.0, 0.0, z]), 2)
        assert d == pytest.approx(3 * z * z, abs=1e-8)

    def test_no_window_fits(self):
        thin = ChartDomain(((-np.inf, np.inf), (-np.inf, np.inf),
                            (-1.000001, -1.0)))
        f = ScalarField(lambda p: p[:, 2], thin)
        with pytest.raises(BoundaryError):
            partial_derivative(f, np.array([0.0, 0.0, -1.0000005]), 2)

    def test_point_outside_domain_rejected(self):
        f = ScalarField(lambda p: p[:, 2], HALF)
        with pytest.raises(BoundaryError):
            partial_derivative(f, np.array([0.0, 0.0, 0.0]), 2)

    def test_halving_reduces_error_by_8x(self):
        f = ScalarField(lambda p: np.sin(3.0 * p[:, 2]), FULL)
        p = np.array([0.0, 0.0, 0.7])
        exact = 3.0 * np.cos(2.1)
        err = [abs(partial_derivative(f, p, 2, DiffScheme(h)) - exact)
               for h in (4e-3, 2e-3, 1e-3)]
        assert err[0] / err[1] >= 8.0
        assert err[1] / err[2] >= 8.0

    def test_step_scales_with_coordinate(self):
        scheme = DiffScheme(1e-3)
        pts = np.array([[0.0, 0.0, 0.5], [0.0, 0.0, -40.0]])
        h = scheme.steps(pts, 2, derived=False)
        assert h[0] == pytest.approx(1e-3)
        assert h[1] == pytest.approx(4e-2)

    def test_quantum_snaps_step(self):
        scheme = DiffScheme(1e-3)
        pts = np.array([[0.0, 0.0, 0.4]])
        h = scheme.steps(pts, 2, derived=False, quantum=3e-4)
        assert h[0] == pytest.approx(3e-4 * 3)


class TestLieBracket:
    def test_coordinate_fields_commute(self):
        x = constant_vector_field([1, 0, 0], FULL)
        y = constant_vector_field([0, 0, 1], FULL)
        br = lie_bracket(x, y, np.array([0.3, -0.7, 2.0]))
        assert np.max(np.abs(br)) < 1e-10

    def test_antisymmetry(self):
        xf = VectorField(lambda p: np.stack(
            [np.sin(p[:, 1]), p[:, 0] * p[:, 2], p[:, 2] ** 2], axis=1), FULL)
        yf = VectorField(lambda p: np.stack(
            [p[:, 1] ** 2, np.cos(p[:, 0]), p[:, 0] + p[:, 2]], axis=1), FULL)
        pts = np.array([[0.2, 0.4, -0.3], [1.0, -1.0, 0.5]])
        fw = lie_bracket(xf, yf, pts)
        bw = lie_bracket(yf, xf, pts)
        assert np.max(np.abs(fw + bw)) < 1e-12

    def test_scaling_commutator(self):
        # [x d_x, d_x] = -d_x
        xf = VectorField(lambda p: np.stack(
            [p[:, 0], 0 * p[:, 0], 0 * p[:, 0]], axis=1), FULL)
        yf = constant_vector_field([1, 0, 0], FULL)
        br = lie_bracket(xf, yf, np.array([2.0, 0.0, 0.0]))
        assert np.allclose(br, [-1.0, 0.0, 0.0], atol=1e-10)

    def test_kmup_frame_bracket(self):
        # [e1, e3] = (1 + lam) e1 with lam = sqrt(-1-z) = 1 at z = -2
        model = build_kmu_prime_chart_model(KmupChartParams())
        e1 = constant_vector_field([1, 0, 0], model.domain)
        br = lie_bracket(e1, model.xi, np.array([0.0, 0.0, -2.0]))
        assert np.allclose(br, [2.0, 0.0, 0.0], atol=1e-6)


def test_coordinate_derivatives_shape():
    f = VectorField(lambda p: np.stack(
        [p[:, 0] ** 2, p[:, 1], np.sin(p[:, 2])], axis=1), FULL)
    out = coordinate_derivatives(f, np.zeros((4, 3)))
    assert out.shape == (4, 3, 3)


def test_domain_membership():
    assert HALF.contains(np.array([0.0, 0.0, -2.0]))
    assert not HALF.contains(np.array([0.0, 0.0, -1.0]))
    closed = ChartDomain(((0.0, 1.0),) * 3, inclusive=True)
    assert closed.contains(np.array([0.0, 1.0, 0.5]))
    pred = ChartDomain(predicate=lambda p: p[:, 0] + p[:, 1] > 0)
    assert pred.contains(np.array([1.0, 0.5, 0.0]))
    assert not pred.contains(np.array([-1.0, 0.5, 0.0]))
