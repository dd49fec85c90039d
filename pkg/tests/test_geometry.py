import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from folia.geometry import (
    STANDARD_J,
    Chart,
    DegenerateFormError,
    Distribution,
    Local,
    SingularMetricError,
    ZeroSpanError,
    adapted_frame,
    complex_structure_at,
    metric_at,
    project,
    screen,
)
from folia.models import calabi_type, flat_c2, punctured_c2_radial

FLAT = flat_c2().chart
CAL = calabi_type(1.0).chart
C2 = ("x1", "y1", "x2", "y2")


def test_flat_metric_is_identity():
    assert np.array_equal(metric_at(FLAT, (0.3, 0.1, -2, 5)).g, np.eye(4))


def test_calabi_metric_values():
    g = metric_at(CAL, (0, 0, 2, 0)).g
    assert g[0, 0] == 2 and g[2, 2] == 0.5 and g[3, 3] == 2 and g[1, 3] == 0


def test_calabi_metric_singular_at_z0():
    with pytest.raises(SingularMetricError):
        metric_at(CAL, (0, 0, 0, 0))


def test_non_positive_metric_rejected():
    c = Chart.build(C2, {(0, 0): "1", (1, 1): "-1", (2, 2): "1", (3, 3): "1"})
    with pytest.raises(SingularMetricError):
        metric_at(c, (0, 0, 0, 0))


def test_standard_J_blocks():
    block = np.array([[0, -1], [1, 0]])
    assert np.array_equal(STANDARD_J[:2, :2], block) and np.array_equal(STANDARD_J[2:, 2:], block)
    assert np.array_equal(complex_structure_at(FLAT, (0, 0, 0, 0)), STANDARD_J)


def test_calabi_from_form_J_at_unit_metric_point():
    # g = identity at (0,0,1,0) with C=1, and J^i_j = g^{ik} Omega_{jk} by hand.
    p = (0, 0, 1, 0)
    assert np.allclose(metric_at(CAL, p).g, np.eye(4))
    Om = np.zeros((4, 4))
    Om[0, 1], Om[2, 3] = 1, 1
    Om -= Om.T
    hand = np.linalg.inv(metric_at(CAL, p).g) @ Om.T
    Jp = complex_structure_at(CAL, p)
    assert np.allclose(Jp, hand) and np.allclose(Jp, STANDARD_J)


def test_zero_form_is_degenerate():
    c = Chart.build(C2, {(i, i): "1" for i in range(4)}, jspec="from-form", components={})
    with pytest.raises(DegenerateFormError):
        complex_structure_at(c, (0, 0, 0, 0))


def test_kahler_form_convention(rng):
    L = Local(CAL, [(0.2, -0.1, 1.3, 0.4)])
    om, g, Jm = L.kahler_form.val[0], L.g.val[0], L.J.val[0]
    for _ in range(5):
        X = rng.normal(size=4)
        assert X @ om @ (Jm @ X) == pytest.approx(X @ g @ X)


def test_flat_adapted_frame():
    F = adapted_frame(FLAT, flat_c2().distribution, (1, 0, 0, 0)).matrix()
    assert np.allclose(F, np.eye(4))


def test_radial_adapted_frame():
    F = adapted_frame(FLAT, punctured_c2_radial().distribution, (1, 0, 0, 0))
    assert np.allclose(F.e1, [1, 0, 0, 0]) and np.allclose(F.e2, [0, 1, 0, 0])


def test_vanishing_field_rejected():
    with pytest.raises(ZeroSpanError):
        adapted_frame(FLAT, punctured_c2_radial().distribution, (0, 0, 0, 0))


def test_projection_examples():
    d = flat_c2().distribution
    assert np.allclose(project(FLAT, d, (0, 0, 0, 0), [1, 2, 0, 0], "E"), 0)
    X = np.array([1.0, 0, 1, 0])
    assert np.allclose(project(FLAT, d, (0, 0, 0, 0), X), [1, 0, 0, 0])
    assert np.allclose(project(FLAT, d, (0, 0, 0, 0), X, "E"), [0, 0, 1, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_pythagoras(X, q):
    p = (q[0], q[1], 1.2, 0.3)
    d = calabi_type(1.0).distribution
    g = metric_at(CAL, p).g
    a, b = project(CAL, d, p, X), project(CAL, d, p, X, "E")
    X = np.asarray(X)
    assert abs(X @ g @ X - (a @ g @ a + b @ g @ b)) <= 1e-12 * (1 + X @ g @ X)


def test_frame_is_orthonormal_and_adapted():
    d = Distribution.from_strings(FLAT, ["cos(x2)", "0", "sin(x2)", "y1"])
    L = Local(FLAT, [(0.1, 0.5, 0.7, -0.2), (0.4, -0.3, 0.2, 0.9)])
    from folia.geometry import Split

    S = Split(L, d)
    F = S.frame
    assert np.allclose(np.einsum("nia,nij,njb->nab", F, L.g.val, F), np.eye(4))
    assert np.allclose(np.einsum("nij,nja->nia", L.J.val, F[:, :, [0, 2]]), F[:, :, [1, 3]])


def test_screen_reasons():
    ok, why = screen(CAL, np.array([[0, 0, 1, 0], [0, 0, 0, 0]], dtype=float))
    assert list(ok) == [True, False] and "singular" in why[1]
