import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from folia.calculus import (
    christoffel_at,
    covariant_derivative_at,
    divergence_at,
    exterior_derivative_at,
    hessian_at,
    hodge_star_2form_at,
    lie_bracket_at,
    lie_derivative_at,
    metric_compatibility,
    riemann_at,
    riemann_symmetry_residuals,
)
from folia.geometry import STANDARD_J, Local
from folia.models import calabi_type, flat_c2, perturbed, product_surfaces

from conftest import christoffel_fd, riemann_fd

FLAT = flat_c2().chart
CAL = calabi_type(1.0).chart
SPH = product_surfaces(1.0, 0.0).chart
X = lambda *s: [FLAT.expr(t) for t in s]  # noqa: E731
EULER = ["x1", "y1", "x2", "y2"]
J_EULER = ["-y1", "x1", "-y2", "x2"]


def test_flat_connection_and_curvature_vanish():
    p = (0.3, -0.2, 0.5, 0.9)
    assert np.abs(christoffel_at(FLAT, p)).max() == 0
    assert np.abs(riemann_at(FLAT, p)).max() == 0


def test_calabi_christoffel_hand_and_fd():
    p = (0, 0, 1, 0)
    G = christoffel_at(CAL, p)
    assert G[2, 0, 0] == pytest.approx(-0.5, abs=1e-14)
    assert np.allclose(G, christoffel_fd(CAL, p), atol=1e-8)


def test_sphere_christoffel():
    p = (math.pi / 4, 0.1, 0.2, 0.3)
    assert christoffel_at(SPH, p)[0, 1, 1] == pytest.approx(-0.5, abs=1e-14)


@pytest.mark.parametrize("scene", [calabi_type(1.0), calabi_type(2.0, "sphere-patch"), product_surfaces(1.0, -1.0)],
                         ids=lambda s: s.name)
def test_riemann_against_fd(scene):
    for p in scene.sample(3, seed=7):
        R = riemann_at(scene.chart, p)
        assert np.abs(R - riemann_fd(scene.chart, p)).max() < 1e-5 * (1 + np.abs(R).max())


def test_product_sectional_curvatures():
    p = (1.0, 0.3, 0.2, -0.4)
    L = Local(product_surfaces(1.0, 0.0).chart, [p])
    R, g = L.riemann[0], L.g.val[0]
    k1 = R[0, 1, 1, 0] / (g[0, 0] * g[1, 1])
    k2 = R[2, 3, 3, 2] / (g[2, 2] * g[3, 3])
    assert k1 == pytest.approx(1.0, abs=1e-12) and k2 == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_curvature_symmetries_everywhere(seed):
    sc = perturbed(calabi_type(1.0), 0.5, seed % 7)
    pts = sc.sample(4, seed)
    L = Local(sc.chart, pts)
    sym = riemann_symmetry_residuals(L.riemann)
    scale = 1 + np.abs(L.riemann).max()
    assert max(v.max() for v in sym.values()) < 1e-12 * scale
    assert metric_compatibility(L).max() < 1e-12


def test_covariant_derivative_examples():
    p = (0.4, -0.3, 0.2, 0.7)
    assert np.allclose(covariant_derivative_at(FLAT, X(*EULER), p), np.eye(4))
    assert np.allclose(covariant_derivative_at(FLAT, X(*J_EULER), p), STANDARD_J)
    zdz = [CAL.expr(s) for s in ("0", "0", "z", "0")]
    assert np.abs(covariant_derivative_at(CAL, zdz, (0.3, 0.2, 1.4, 0.1)) - 0.5 * np.eye(4)).max() < 1e-8


def test_brackets():
    p = (0.4, -0.3, 0.2, 0.7)
    assert np.allclose(lie_bracket_at(FLAT, X("1", "0", "0", "0"), X("0", "0", "1", "0"), p), 0)
    assert np.allclose(lie_bracket_at(FLAT, X("0", "x1", "0", "0"), X("1", "0", "0", "0"), p), [0, -1, 0, 0])
    assert np.allclose(lie_bracket_at(FLAT, X(*EULER), X(*J_EULER), p), 0)


def test_lie_derivatives():
    p = (0.4, -0.3, 0.2, 0.7)
    rot = X("-y1", "x1", "0", "0")
    assert np.allclose(lie_derivative_at(FLAT, rot, "metric", p), 0)
    assert np.allclose(lie_derivative_at(FLAT, X(*EULER), "metric", p), 2 * np.eye(4))
    assert np.allclose(lie_derivative_at(FLAT, X(*EULER), "J", p), 0)


def test_lie_derivative_metric_matches_fd(rng):
    # (L_V g)_ij = V^k d_k g_ij + g_kj d_i V^k + g_ik d_j V^k, assembled from differences.
    V = [CAL.expr(s) for s in ("y*z", "sin(x)", "x*t", "z^2")]
    p = np.array([0.3, 0.2, 1.4, 0.1])
    from conftest import metric_fn, value_fn

    g = metric_fn(CAL)
    h = 1e-6
    dg = np.stack([(g(p + h * e) - g(p - h * e)) / (2 * h) for e in np.eye(4)], -1)
    Vv = np.array([value_fn(v)(p) for v in V])
    dV = np.array([[(value_fn(v)(p + h * e) - value_fn(v)(p - h * e)) / (2 * h) for e in np.eye(4)] for v in V])
    oracle = np.einsum("k,ijk->ij", Vv, dg) + np.einsum("kj,ki->ij", g(p), dV) + np.einsum("ik,kj->ij", g(p), dV)
    assert np.allclose(lie_derivative_at(CAL, V, "metric", p), oracle, atol=1e-7)


def test_exterior_derivative_of_x_dy():
    d = exterior_derivative_at(FLAT, X("0", "x1", "0", "0"), (0.2, 0.1, 0, 0))
    expect = np.zeros((4, 4))
    expect[0, 1], expect[1, 0] = 1, -1
    assert np.array_equal(d, expect)


def test_hessians():
    p = (0.3, -0.2, 0.5, 0.1)
    half_r2 = FLAT.expr("0.5*(x1^2 + y1^2 + x2^2 + y2^2)")
    assert np.allclose(hessian_at(FLAT, half_r2, p), np.eye(4))
    q = (0.3, -0.2, 1.3, 0.1)
    from folia.geometry import metric_at

    assert np.abs(hessian_at(CAL, CAL.expr("z"), q) - 0.5 * metric_at(CAL, q).g).max() < 1e-8
    assert np.allclose(hessian_at(CAL, CAL.expr("3"), q), 0)


def test_hodge_star():
    p = (0.1, 0.2, 0.3, 0.4)
    e12 = np.zeros((4, 4))
    e12[0, 1], e12[1, 0] = 1, -1
    e34 = np.zeros((4, 4))
    e34[2, 3], e34[3, 2] = 1, -1
    assert np.allclose(hodge_star_2form_at(FLAT, p, e12), e34)
    rng = np.random.default_rng(0)
    q = (0.3, -0.2, 1.3, 0.1)
    for _ in range(3):
        b = rng.normal(size=(4, 4))
        b -= b.T
        assert np.allclose(hodge_star_2form_at(CAL, q, hodge_star_2form_at(CAL, q, b)), b)


def test_divergence():
    p = (0.3, -0.2, 0.5, 0.1)
    assert divergence_at(FLAT, X("1", "2", "0", "-1"), p) == 0
    assert divergence_at(FLAT, X(*EULER), p) == pytest.approx(4)
    # J eta with eta = xi / |theta|^2 = xi r^2 / 4 on punctured C^2.
    r2 = "(x1^2 + y1^2 + x2^2 + y2^2)/4"
    J_eta = X(f"-y1*{r2}", f"x1*{r2}", f"-y2*{r2}", f"x2*{r2}")
    assert abs(divergence_at(FLAT, J_eta, (0.7, -0.4, 0.3, 0.5))) < 1e-7
