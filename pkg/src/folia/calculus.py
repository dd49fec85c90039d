"""Pointwise tensor calculus on a chart.

Batched functions take a :class:`~folia.geometry.Local` and jets of fields;
``*_at`` wrappers take a chart, expression fields and a single point.

Index conventions (coordinate basis)::

    Gamma[k, i, j]  = Gamma^k_{ij}
    nabla F [i, j]  = (nabla_j F)^i
    R[i, j, k, l]   = g(R(d_i, d_j) d_k, d_l),  R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import jet as J
from .expr import Expr
from .geometry import Chart, Local
from .jet import DIM, Jet

LEVI_CIVITA = np.zeros((DIM,) * 4)
for _p in __import__("itertools").permutations(range(DIM)):
    LEVI_CIVITA[_p] = J._perm_sign(_p)


def christoffel(L: Local) -> Jet:
    return L.christoffel


def riemann(L: Local) -> np.ndarray:
    return L.riemann


def covariant_derivative(L: Local, F: Jet) -> Jet:
    """``(nabla F)[i, j] = d_j F^i + Gamma^i_{jk} F^k``."""
    return F.partial() + J.einsum("ijk,k->ij", L.christoffel, F)


def covariant_derivative_form(L: Local, a: Jet) -> Jet:
    """``(nabla a)[i, j] = (nabla_j a)_i`` for a 1-form ``a``."""
    return a.partial() - J.einsum("kji,k->ij", L.christoffel, a)


def covariant_derivative_2tensor(L: Local, b: Jet) -> Jet:
    """``(nabla b)[i, j, k] = (nabla_k b)_{ij}`` for a covariant 2-tensor."""
    G = L.christoffel
    return b.partial() - J.einsum("mki,mj->ijk", G, b) - J.einsum("mkj,im->ijk", G, b)


def covariant_derivative_endo(L: Local, A: Jet) -> Jet:
    """``(nabla A)[i, j, k] = (nabla_k A)^i_j`` for an endomorphism field."""
    G = L.christoffel
    return A.partial() + J.einsum("ikm,mj->ijk", G, A) - J.einsum("mkj,im->ijk", G, A)


def metric_compatibility(L: Local) -> np.ndarray:
    """Per-point max |nabla g|; identically zero for the Levi-Civita connection."""
    return np.abs(covariant_derivative_2tensor(L, L.g).val).max(axis=(1, 2, 3))


def lie_bracket(X: Jet, Y: Jet) -> Jet:
    """``[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i``."""
    return J.einsum("j,ij->i", X, Y.partial()) - J.einsum("j,ij->i", Y, X.partial())


def lie_derivative_metric(L: Local, V: Jet) -> Jet:
    g = L.g
    dV = V.partial()  # dV[k, i] = d_i V^k
    return (
        J.einsum("k,ijk->ij", V, g.partial())
        + J.einsum("kj,ki->ij", g, dV)
        + J.einsum("ik,kj->ij", g, dV)
    )


def lie_derivative_endo(V: Jet, A: Jet) -> Jet:
    """``(L_V A)X = [V, AX] - A[V, X]`` in components."""
    dV = V.partial()
    return (
        J.einsum("k,ijk->ij", V, A.partial())
        - J.einsum("kj,ik->ij", A, dV)
        + J.einsum("ik,kj->ij", A, dV)
    )


exterior_derivative = J.exterior_derivative
wedge = J.wedge


def hessian(L: Local, phi: Jet) -> Jet:
    """``H_ij = d_i d_j phi - Gamma^k_ij d_k phi``."""
    dphi = phi.partial()
    return dphi.partial() - J.einsum("kij,k->ij", L.christoffel, dphi)


def divergence(L: Local, V: Jet) -> Jet:
    return J.reindex("ii->", covariant_derivative(L, V))


def pfaffian(w: np.ndarray) -> np.ndarray:
    return w[..., 0, 1] * w[..., 2, 3] - w[..., 0, 2] * w[..., 1, 3] + w[..., 0, 3] * w[..., 1, 2]


def hodge_star_2form(L: Local, beta: np.ndarray, orientation_form: np.ndarray) -> np.ndarray:
    """Hodge star of 2-forms, oriented by the volume form ``Omega^2 / 2``.

    ``orientation_form`` is the Kähler form of the structure (J or I) whose
    orientation is used; ``Omega_I^2 = -Omega_J^2`` flips the sign.
    """
    g, gi = L.g.val, L.ginv.val
    sign = np.sign(pfaffian(orientation_form))
    vol = np.sqrt(np.linalg.det(g)) * sign
    up = np.einsum("...ka,...lb,...ab->...kl", gi, gi, beta)
    return 0.5 * vol[:, None, None] * np.einsum("klij,...kl->...ij", LEVI_CIVITA, up)


def curvature_endomorphism(Rup: np.ndarray) -> np.ndarray:
    """``E[i, j, l, k]``: the endomorphism R(d_i, d_j) as a matrix (l, k)."""
    return np.einsum("...lkij->...ijlk", Rup)


def curvature_action(R: np.ndarray, Rup: np.ndarray) -> np.ndarray:
    """Derivation action of R(X, Y) on the (0,4) curvature tensor.

    ``(R(X,Y).R)(Z,U,V,W) = -R(R(X,Y)Z,U,V,W) - R(Z,R(X,Y)U,V,W)
    - R(Z,U,R(X,Y)V,W) - R(Z,U,V,R(X,Y)W)``; result indexed [x, y, z, u, v, w].
    """
    E = curvature_endomorphism(Rup)  # E[x, y, m, z] : (R(d_x,d_y) d_z)^m
    return -(
        np.einsum("...xymz,...muvw->...xyzuvw", E, R)
        + np.einsum("...xymu,...zmvw->...xyzuvw", E, R)
        + np.einsum("...xymv,...zumw->...xyzuvw", E, R)
        + np.einsum("...xymw,...zuvm->...xyzuvw", E, R)
    )


def riemann_symmetry_residuals(R: np.ndarray) -> dict[str, np.ndarray]:
    """Per-point max residual of each algebraic curvature symmetry."""
    ax = tuple(range(1, 5))
    return {
        "antisym_12": np.abs(R + np.einsum("...ijkl->...jikl", R)).max(axis=ax),
        "antisym_34": np.abs(R + np.einsum("...ijkl->...ijlk", R)).max(axis=ax),
        "pair_symmetry": np.abs(R - np.einsum("...ijkl->...klij", R)).max(axis=ax),
        "bianchi": np.abs(
            R + np.einsum("...jkil->...ijkl", R) + np.einsum("...kijl->...ijkl", R)
        ).max(axis=ax),
    }


def orthonormal_frame(L: Local) -> np.ndarray:
    """A g-orthonormal frame F[n, i, a] from the Cholesky factor of g."""
    C = np.linalg.cholesky(L.g.val)
    return np.linalg.inv(np.swapaxes(C, -1, -2))


def frame_components(T: np.ndarray, F: np.ndarray, kinds: str) -> np.ndarray:
    Finv = np.linalg.inv(F)
    out = T
    for ax, kind in enumerate(kinds):
        M = F if kind == "l" else np.swapaxes(Finv, -1, -2)
        moved = np.moveaxis(out, ax + 1, -1)
        moved = np.einsum("n...i,nia->n...a", moved, M)
        out = np.moveaxis(moved, -1, ax + 1)
    return out


# -- one-point wrappers ---------------------------------------------------------


def _vec(L: Local, F: Sequence[Expr]) -> Jet:
    return J.stack([L.scalar(e) for e in F])


def christoffel_at(c: Chart, p) -> np.ndarray:
    return Local(c, p).christoffel.val[0]


def riemann_at(c: Chart, p) -> np.ndarray:
    return Local(c, p).riemann[0]


def covariant_derivative_at(c: Chart, F: Sequence[Expr], p) -> np.ndarray:
    L = Local(c, p)
    return covariant_derivative(L, _vec(L, F)).val[0]


def lie_bracket_at(c: Chart, X: Sequence[Expr], Y: Sequence[Expr], p) -> np.ndarray:
    L = Local(c, p)
    return lie_bracket(_vec(L, X), _vec(L, Y)).val[0]


def lie_derivative_at(c: Chart, V: Sequence[Expr], T: str, p) -> np.ndarray:
    """``T`` is ``"metric"`` or ``"J"``."""
    L = Local(c, p)
    Vj = _vec(L, V)
    if T == "metric":
        return lie_derivative_metric(L, Vj).val[0]
    if T == "J":
        return lie_derivative_endo(Vj, L.J).val[0]
    raise ValueError("T must be 'metric' or 'J'")


def form_field(L: Local, components: Sequence[Expr]) -> Jet:
    """Assemble a 1-form (4 components) or a 2-form (6, upper triangle)."""
    comps = [L.scalar(e) for e in components]
    if len(comps) == DIM:
        return J.stack(comps)
    if len(comps) == 6:
        return Local.form_from_components(comps)
    raise ValueError("expected 4 (1-form) or 6 (2-form) components")


def exterior_derivative_at(c: Chart, omega: Sequence[Expr], p) -> np.ndarray:
    L = Local(c, p)
    return exterior_derivative(form_field(L, omega)).val[0]


def hessian_at(c: Chart, phi: Expr, p) -> np.ndarray:
    L = Local(c, p)
    return hessian(L, L.scalar(phi)).val[0]


def hodge_star_2form_at(c: Chart, p, beta, orientation: str = "J", dist=None) -> np.ndarray:
    """``orientation`` is ``"J"`` or ``"I"``; the I-orientation needs ``dist``."""
    L = Local(c, p)
    if orientation == "J":
        Om = L.kahler_form.val
    else:
        from .geometry import Split
        from .hermitian import opposite_structure

        Om = opposite_structure(Split(L, dist)).omega_I.val
    beta = np.asarray(beta, dtype=float).reshape(1, DIM, DIM)
    return hodge_star_2form(L, beta, Om)[0]


def divergence_at(c: Chart, V: Sequence[Expr], p) -> float:
    L = Local(c, p)
    return float(divergence(L, _vec(L, V)).val[0])
