"""Kähler forms, the opposite structure I of a distribution, Nijenhuis tensor,
Lee form and Gray's second curvature condition.

Sign conventions:

* ``omega(X, Y) = g(JX, Y)`` for every Kähler form.
* The Lee form theta is defined by ``d omega_2 = theta ^ omega_2``, which is the
  same as ``d Omega_I = +2 theta ^ Omega_I``.
* ``(J theta)(X) = -theta(JX)`` so that ``(J theta)^# = J theta^#``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jet as J
from .calculus import covariant_derivative_endo, frame_components, orthonormal_frame
from .geometry import Chart, Distribution, Local, Split
from .jet import DIM, Jet

THREE_FORM_INDICES = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]


def _wedge_matrix_selector() -> np.ndarray:
    """W[c, m, j, k]: coefficient so that (lam ^ Om)_c = W[c, m, j, k] lam_m Om_jk."""
    W = np.zeros((4, DIM, DIM, DIM))
    for c, (i, j, k) in enumerate(THREE_FORM_INDICES):
        W[c, i, j, k] += 1.0
        W[c, j, i, k] -= 1.0
        W[c, k, i, j] += 1.0
    return W


WEDGE_1_2 = _wedge_matrix_selector()


def kahler_form(L: Local) -> Jet:
    return L.kahler_form


@dataclass
class OppositeStructure:
    I: Jet
    omega_J: Jet
    omega_I: Jet
    omega1: Jet
    omega2: Jet


def opposite_structure(S: Split) -> OppositeStructure:
    L = S.local
    om1 = J.wedge(L.lower(S.e1), L.lower(S.e2))
    omJ = L.kahler_form
    om2 = omJ - om1
    eye = Jet.const(np.broadcast_to(np.eye(DIM), (L.n, DIM, DIM)))
    I = J.einsum("ik,kj->ij", L.J, S.P_delta * 2.0 - eye)
    return OppositeStructure(I=I, omega_J=omJ, omega_I=om1 - om2, omega1=om1, omega2=om2)


def nijenhuis(A: Jet) -> np.ndarray:
    """``N[i, j, k] = N(d_j, d_k)^i`` with
    ``N(X,Y) = [AX,AY] - A[AX,Y] - A[X,AY] - [X,Y]``."""
    a, dA = A.val, A.partial().val  # dA[i, j, m] = d_m A^i_j
    t = np.einsum("...mj,...ikm->...ijk", a, dA)
    u = np.einsum("...im,...mjk->...ijk", a, dA)
    return t - np.swapaxes(t, -1, -2) + u - np.swapaxes(u, -1, -2)


def nijenhuis_norm(L: Local, A: Jet, F: np.ndarray | None = None) -> np.ndarray:
    """Per-point max over orthonormal frame pairs of |N(e_a, e_b)|."""
    F = orthonormal_frame(L) if F is None else F
    Nf = frame_components(nijenhuis(A), F, "ull")
    return np.sqrt((Nf**2).sum(axis=1)).max(axis=(1, 2))


def solve_wedge(Om: Jet, three_form: Jet) -> Jet:
    """Unique 1-form lam with ``lam ^ Om = three_form`` (Om non-degenerate)."""
    M = J.einsum("cmjk,jk->cm", Jet.const(np.broadcast_to(WEDGE_1_2, (Om.n,) + WEDGE_1_2.shape)), Om)
    rhs = J.stack([three_form[idx] for idx in THREE_FORM_INDICES])
    return J.solve(M, rhs)


class Hermitian:
    """Opposite structure and Lee form of a distribution on a batch of points."""

    def __init__(self, S: Split):
        self.split = S
        self.local = S.local

    @cached_property
    def os(self) -> OppositeStructure:
        return opposite_structure(self.split)

    @cached_property
    def dOmega_I(self) -> Jet:
        return J.exterior_derivative(self.os.omega_I)

    @cached_property
    def lam(self) -> Jet:
        return solve_wedge(self.os.omega_I, self.dOmega_I)

    @cached_property
    def theta(self) -> Jet:
        """Canonical Lee form, ``d Omega_I = 2 theta ^ Omega_I`` (order 1)."""
        return self.lam * 0.5

    @cached_property
    def theta_sharp(self) -> Jet:
        return self.local.raise_(self.theta)

    @cached_property
    def J_theta(self) -> Jet:
        """``(J theta)_j = -theta_i J^i_j``."""
        return -J.einsum("i,ij->j", self.theta, self.local.J)

    @cached_property
    def dtheta(self) -> np.ndarray:
        return J.exterior_derivative(self.theta).val

    def theta_E_residual(self) -> np.ndarray:
        """|theta restricted to E| per point."""
        F = self.split.frame
        th = np.einsum("ni,nia->na", self.theta.val, F)
        return np.sqrt(th[:, 2] ** 2 + th[:, 3] ** 2)

    def lee_residual(self) -> np.ndarray:
        """|d omega_2 - theta ^ omega_2| in the adapted frame."""
        d2 = J.exterior_derivative(self.os.omega2).truncate(0)
        r = d2 - J.wedge(self.theta.truncate(0), self.os.omega2.truncate(0))
        return _frame_max(r.val, self.split.frame, "lll")

    def lee_sign_residuals(self) -> dict[str, np.ndarray]:
        """``d Omega_I -/+ 2 theta ^ Omega_I`` for both printed sign conventions."""
        wt = J.wedge(self.theta.truncate(0), self.os.omega_I.truncate(0)).val
        d = self.dOmega_I.val
        F = self.split.frame
        return {
            "plus_2": _frame_max(d - 2 * wt, F, "lll"),
            "minus_2": _frame_max(d + 2 * wt, F, "lll"),
        }


def _frame_max(T: np.ndarray, F: np.ndarray, kinds: str) -> np.ndarray:
    Tf = frame_components(T, F, kinds)
    return np.abs(Tf).reshape(len(Tf), -1).max(axis=1)


def structure_checks(H: Hermitian) -> dict[str, np.ndarray]:
    """Algebraic invariants of the opposite structure, per point."""
    L, os = H.local, H.os
    Iv, g = os.I.val, L.g.val
    eye = np.eye(DIM)
    F = H.split.frame
    wJ2 = _wedge22(os.omega_J.val)
    wI2 = _wedge22(os.omega_I.val)
    sqrt_det = np.sqrt(np.linalg.det(g))
    return {
        "I_squared": np.abs(Iv @ Iv + eye).max(axis=(1, 2)),
        "I_orthogonal": np.abs(np.einsum("nki,nkl,nlj->nij", Iv, g, Iv) - g).max(axis=(1, 2)),
        "omega_I_is_gIXY": _frame_max(os.omega_I.val - np.einsum("nki,nkj->nij", Iv, g), F, "ll"),
        "square_relation": np.abs(wJ2 + wI2) / sqrt_det,
    }


def _wedge22(w: np.ndarray) -> np.ndarray:
    """The 0123 component of ``w ^ w``."""
    return 2.0 * (
        w[:, 0, 1] * w[:, 2, 3] - w[:, 0, 2] * w[:, 1, 3] + w[:, 0, 3] * w[:, 1, 2]
    )


def gray_g2_residual(R: np.ndarray, A: np.ndarray, F: np.ndarray, Jm: np.ndarray, variant: str = "symmetric"):
    """Per-point max over frame 4-tuples of the (G2) defect for structure ``A``.

    ``variant="symmetric"`` reads the last term as R(AX, Y, Z, AW); ``"printed"``
    uses R(AX, Y, Z, JW).
    """
    Rf = frame_components(R, F, "llll")
    Finv = np.linalg.inv(F)
    Af = Finv @ A @ F  # Af[b, a]: A e_a = sum_b Af[b, a] e_b
    Bf = Af if variant == "symmetric" else Finv @ Jm @ F
    RAA = np.einsum("npx,nqy,npqzw->nxyzw", Af, Af, Rf)
    RAxAz = np.einsum("npx,nqz,npyqw->nxyzw", Af, Af, Rf)
    RAxBw = np.einsum("npx,nqw,npyzq->nxyzw", Af, Bf, Rf)
    d = Rf - RAA - RAxAz - RAxBw
    return np.abs(d).reshape(len(d), -1).max(axis=1)


def kahler_residual(L: Local) -> tuple[np.ndarray, np.ndarray]:
    """Per-point ``(|nabla J|, |d Omega_J|)`` in an orthonormal frame."""
    F = orthonormal_frame(L)
    nJ = covariant_derivative_endo(L, L.J).val
    dOm = J.exterior_derivative(L.kahler_form).val
    return _frame_max(nJ, F, "ull"), _frame_max(dOm, F, "lll")


# -- one-point wrappers ---------------------------------------------------------


def kahler_form_at(c: Chart, p) -> np.ndarray:
    return Local(c, p).kahler_form.val[0]


def opposite_structure_at(c: Chart, d: Distribution, p) -> OppositeStructure:
    return opposite_structure(Split(Local(c, p), d))


def nijenhuis_at(c: Chart, p, A: str | Distribution = "J") -> np.ndarray:
    """Nijenhuis tensor of J (``A="J"``) or of the opposite structure of ``A``."""
    L = Local(c, p)
    if isinstance(A, Distribution):
        return nijenhuis(opposite_structure(Split(L, A)).I)[0]
    return nijenhuis(L.J)[0]


def lee_form_at(c: Chart, d: Distribution, p) -> np.ndarray:
    return Hermitian(Split(Local(c, p), d)).theta.val[0]


def gray_g2_residual_at(c: Chart, d: Distribution | None, p, variant: str = "symmetric") -> float:
    L = Local(c, p)
    if d is None:
        A = L.J.val
        F = orthonormal_frame(L)
    else:
        S = Split(L, d)
        A = opposite_structure(S).I.val
        F = S.frame
    return float(gray_g2_residual(L.riemann, A, F, L.J.val, variant)[0])


def kahler_residual_at(c: Chart, points) -> tuple[float, float]:
    a, b = kahler_residual(Local(c, points))
    return float(a.max()), float(b.max())
