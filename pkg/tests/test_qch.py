import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from folia.geometry import STANDARD_J, Distribution, Local, Split
from folia.models import calabi_type, flat_c2, perturbed, product_surfaces, punctured_c2_radial
from folia.qch import (
    S_CLASSES,
    _fit,
    basis_frame,
    basis_tensors_at,
    fit_decomposition,
    fit_decomposition_at,
    h_matrix,
    hessian_field_check,
    holomorphic_curvature,
    parallel_homothety_check,
    qch_sampling_residual,
    riemann_frame,
    semi_symmetry_residual,
    semisym_identities_residual,
    theorem8_curvature_residual,
    theorem9_suite,
    unit_vectors,
)

FLAT, PUNC, CAL = flat_c2(), punctured_c2_radial(), calabi_type(1.0)
unit4 = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1)


@settings(max_examples=50, deadline=None)
@given(unit4)
def test_basis_tensor_normalizations(v):
    X = np.asarray(v) / np.linalg.norm(v)
    for conv in ("E", "Delta"):
        h = h_matrix(conv)
        Pi, Phi, Psi = basis_frame(h)
        hx = X @ h @ X
        assert holomorphic_curvature(Pi, X) == pytest.approx(1.0, abs=1e-12)
        assert holomorphic_curvature(Phi, X) == pytest.approx(hx, abs=1e-12)
        assert holomorphic_curvature(Psi, X) == pytest.approx(hx**2, abs=1e-12)


def test_h_is_J_invariant_rank_two():
    for conv in ("E", "Delta"):
        h = h_matrix(conv)
        assert np.allclose(STANDARD_J.T @ h @ STANDARD_J, h) and np.linalg.matrix_rank(h) == 2


def test_basis_tensors_in_coordinates_have_curvature_symmetries():
    Pi, Phi, Psi = basis_tensors_at(CAL.chart, CAL.distribution, (0.2, 0.1, 1.3, 0.4))
    for T in (Pi, Phi, Psi):
        assert np.allclose(T, -T.transpose(1, 0, 2, 3)) and np.allclose(T, T.transpose(2, 3, 0, 1))


def test_flat_fit_is_zero():
    f = fit_decomposition_at(FLAT.chart, FLAT.distribution, (0.1, 0.2, 0.3, 0.4))
    assert (f["a"], f["b"], f["c"], f["residual"]) == (0, 0, 0, 0) and f["flat_point"]


def test_calabi_fit_uses_E_projection():
    S = Split(Local(CAL.chart, CAL.sample(30, 0)), CAL.distribution)
    fE = fit_decomposition(S, "E")
    assert fE.residual.max() < 1e-6 and np.abs(fE.a).max() < 1e-6 and np.abs(fE.b).max() < 1e-6
    assert fit_decomposition(S).convention == "E"
    # h_Delta = g - h_E spans the same tensors, so only the coefficients tell them apart
    fD = fit_decomposition(S, "Delta")
    assert fD.residual.max() < 1e-6 and np.abs(fD.a).min() > 0.1


def test_product_surfaces_fit():
    sc = product_surfaces(1.0, -1.0)
    S = Split(Local(sc.chart, sc.sample(20, 0)), sc.distribution)
    f = fit_decomposition(S)
    assert f.residual.max() < 1e-6


@pytest.mark.parametrize("scene", [CAL, product_surfaces(1.0, -1.0), calabi_type(2.0, "sphere-patch")],
                         ids=lambda s: s.name)
def test_fitted_holomorphic_curvature_formula(scene):
    S = Split(Local(scene.chart, scene.sample(5, 2)), scene.distribution)
    f = fit_decomposition(S)
    Rf = riemann_frame(S)
    h = h_matrix(f.convention)
    for s in S_CLASSES:
        for X in unit_vectors(s, 8):
            K = holomorphic_curvature(Rf, X)
            hx = X @ h @ X
            assert np.allclose(K, f.a + f.b * hx + f.c * hx**2, atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_fit_residual_frame_invariant(alpha, beta):
    S = Split(Local(CAL.chart, [(0.3, -0.2, 1.1, 0.4)]), calabi_type(1.0).distribution)
    sc = product_surfaces(1.0, -1.0)
    S2 = Split(Local(sc.chart, [(1.0, 0.2, 1.1, 0.4)]), Distribution.from_strings(sc.chart, ["1", "0.3", "0.2", "0"]))
    for Sk in (S, S2):
        Rf = riemann_frame(Sk)
        Jf = np.broadcast_to(STANDARD_J, (1, 4, 4))
        rot = lambda t: np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])  # noqa: E731
        Q = np.zeros((4, 4))
        Q[:2, :2], Q[2:, 2:] = rot(alpha), rot(beta)
        Rq = np.einsum("nabcd,ax,by,cz,dw->nxyzw", Rf, Q, Q, Q, Q)
        for conv in ("E", "Delta"):
            assert _fit(Rq, Jf, conv).residual[0] == pytest.approx(_fit(Rf, Jf, conv).residual[0], abs=1e-12)


def test_qch_sampling():
    assert qch_sampling_residual(FLAT.chart, FLAT.distribution, (0.1, 0.2, 0.3, 0.4)) == 0
    for p in CAL.sample(10, 3):
        assert qch_sampling_residual(CAL.chart, CAL.distribution, p) < 1e-7
    wrong = Distribution.from_strings(CAL.chart, ["1", "0", "1", "0"])
    for p in CAL.sample(5, 3):
        assert qch_sampling_residual(CAL.chart, wrong, p) > 1e-3


def test_semi_symmetry():
    assert semi_symmetry_residual(FLAT.chart, (0.1, 0.2, 0.3, 0.4)) == 0
    assert max(semi_symmetry_residual(CAL.chart, p) for p in CAL.sample(10, 0)) < 1e-6
    bad = perturbed(CAL, 0.5, seed=1)
    vals = np.array([semi_symmetry_residual(bad.chart, p) for p in bad.sample(40, 0)])
    assert np.median(vals) > 1e-3 and (vals > 1e-3).mean() > 0.9


def test_hessian_field_check():
    half_r2 = FLAT.potential
    c, r = hessian_field_check(FLAT.chart, half_r2, FLAT.sample(20, 0))
    assert c == pytest.approx(1.0, abs=1e-12) and r == 0
    c, r = hessian_field_check(CAL.chart, CAL.chart.expr("z"), CAL.sample(20, 0))
    assert c == pytest.approx(0.5, abs=1e-10) and r < 1e-8
    _, r = hessian_field_check(FLAT.chart, FLAT.chart.expr("x1^3"), [(0.5, 0.1, 0.2, 0.3)])
    assert r > 0.1


def test_parallel_homothety_check():
    pts = FLAT.sample(10, 0)
    euler = [FLAT.chart.expr(s) for s in ("x1", "y1", "x2", "y2")]
    j_euler = [FLAT.chart.expr(s) for s in ("-y1", "x1", "-y2", "x2")]
    assert parallel_homothety_check(FLAT.chart, euler, "identity", pts) == (pytest.approx(1.0), 0.0)
    assert parallel_homothety_check(FLAT.chart, j_euler, "J", pts) == (pytest.approx(1.0), 0.0)
    zdz = [CAL.chart.expr(s) for s in ("0", "0", "z", "0")]
    c, r = parallel_homothety_check(CAL.chart, zdz, "identity", CAL.sample(10, 0))
    assert c == pytest.approx(0.5) and r < 1e-8


def test_theorem8_curvature():
    assert theorem8_curvature_residual(FLAT.chart, FLAT.distribution, FLAT.sample(5, 0))["curvature"] == 0
    assert theorem8_curvature_residual(CAL.chart, CAL.distribution, CAL.sample(20, 0))["curvature"] < 1e-7
    r = theorem8_curvature_residual(PUNC.chart, PUNC.distribution, PUNC.sample(20, 0))
    assert r["curvature"] < 1e-9 and r["dtheta_J_anti_invariance"] < 1e-9


@pytest.mark.parametrize("scene", [PUNC, CAL], ids=lambda s: s.name)
def test_semisym_identities(scene):
    r = semisym_identities_residual(scene.chart, scene.distribution, scene.sample(50, 0))
    assert not r.pop("vacuous")
    assert len(r) == 5 and max(r.values()) < 1e-7


def test_semisym_identities_vacuous_on_flat_split():
    r = semisym_identities_residual(FLAT.chart, FLAT.distribution, FLAT.sample(5, 0))
    assert r.pop("vacuous") and max(r.values()) == 0


@pytest.mark.parametrize("scene", [FLAT, CAL, calabi_type(0.5), calabi_type(2.0), calabi_type(1.0, "sphere-patch")],
                         ids=lambda s: s.name)
def test_theorem9_full_pass(scene):
    res = theorem9_suite(scene.chart, scene.potential, scene.sample(60, 0))
    assert res.passed, [(s.name, s.residual) for s in res.stages if not s.passed]


def test_theorem9_reports_failing_hessian():
    res = theorem9_suite(CAL.chart, CAL.chart.expr("z^2"), CAL.sample(30, 0))
    assert res.failing_stage == "hessian" and not res.counterexample
