"""Quasi-constant holomorphic sectional curvature (QCH) machinery.

The curvature of a QCH Kähler surface decomposes as ``R = a Pi + b Phi + c Psi``
with::

    Pi(X,Y,Z,U)  = 1/4 (g(Y,Z)g(X,U) - g(X,Z)g(Y,U) + g(JY,Z)g(JX,U)
                        - g(JX,Z)g(JY,U) - 2 g(JX,Y)g(JZ,U))
    Phi(X,Y,Z,U) = 1/8 (g(Y,Z)h(X,U) - g(X,Z)h(Y,U) + g(X,U)h(Y,Z) - g(Y,U)h(X,Z)
                        + g(JY,Z)h(JX,U) - g(JX,Z)h(JY,U) + g(JX,U)h(JY,Z)
                        - g(JY,U)h(JX,Z) - 2 g(JX,Y)h(JZ,U) - 2 g(JZ,U)h(JX,Y))
    Psi(X,Y,Z,U) = -h(JX,Y) h(JZ,U)

where ``h`` is the metric restricted to E (default) or to Delta.  All tensors
are built in the orthonormal adapted frame, where g is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jet as J
from .calculus import covariant_derivative, curvature_action, frame_components, hessian, hodge_star_2form, lie_bracket
from .expr import Expr
from .foliation import (
    TOL_ALGEBRAIC,
    TOL_DERIVED,
    Foliation,
    Prepared,
    prepare,
)
from .geometry import STANDARD_J, Chart, Distribution, Local, Split
from .hermitian import Hermitian
from .jet import DIM, Jet

FLAT_THRESHOLD = 1e-12
VACUOUS_THRESHOLD = 1e-12
S_CLASSES = (0.0, 0.25, 0.5, 0.75, 1.0)
H_CONVENTIONS = ("E", "Delta")


def h_matrix(convention: str = "E") -> np.ndarray:
    """Frame matrix of h: the metric restricted to E or to Delta."""
    if convention == "E":
        return np.diag([0.0, 0.0, 1.0, 1.0])
    if convention == "Delta":
        return np.diag([1.0, 1.0, 0.0, 0.0])
    raise ValueError("h convention must be 'E' or 'Delta'")


def basis_frame(h: np.ndarray, Jf: np.ndarray = STANDARD_J, g: np.ndarray | None = None):
    """(Pi, Phi, Psi) as 4^4 arrays for metric ``g``, structure ``Jf``, form ``h``.

    ``Jf[b, a]`` are the components of J e_a; bilinear forms are matrices.
    """
    g = np.eye(DIM) if g is None else g
    gJ = Jf.T @ g  # gJ[a, b] = g(J e_a, e_b)
    hJ = Jf.T @ h
    e = np.einsum
    Pi = 0.25 * (
        e("yz,xu->xyzu", g, g) - e("xz,yu->xyzu", g, g) + e("yz,xu->xyzu", gJ, gJ)
        - e("xz,yu->xyzu", gJ, gJ) - 2 * e("xy,zu->xyzu", gJ, gJ)
    )
    Phi = 0.125 * (
        e("yz,xu->xyzu", g, h) - e("xz,yu->xyzu", g, h) + e("xu,yz->xyzu", g, h)
        - e("yu,xz->xyzu", g, h) + e("yz,xu->xyzu", gJ, hJ) - e("xz,yu->xyzu", gJ, hJ)
        + e("xu,yz->xyzu", gJ, hJ) - e("yu,xz->xyzu", gJ, hJ)
        - 2 * e("xy,zu->xyzu", gJ, hJ) - 2 * e("zu,xy->xyzu", gJ, hJ)
    )
    Psi = -e("xy,zu->xyzu", hJ, hJ)
    return Pi, Phi, Psi


def holomorphic_curvature(R: np.ndarray, X: np.ndarray, Jf: np.ndarray = STANDARD_J) -> np.ndarray:
    """``R(X, JX, JX, X)`` for frame vectors ``X[..., 4]``."""
    JX = X @ Jf.T
    return np.einsum("...xyzu,...x,...y,...z,...u->...", R, X, JX, JX, X)


def _frame_J(S: Split) -> np.ndarray:
    return np.linalg.inv(S.frame) @ S.local.J.val @ S.frame


def riemann_frame(S: Split) -> np.ndarray:
    return frame_components(S.local.riemann, S.frame, "llll")


def basis_tensors(S: Split, convention: str = "E") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate components of (Pi, Phi, Psi), shape (n, 4, 4, 4, 4) each."""
    Finv = np.linalg.inv(S.frame)  # Finv[n, a, i]: coframe
    Jf = _frame_J(S)
    out = []
    for k in range(3):
        T = np.stack([basis_frame(h_matrix(convention), Jf[n])[k] for n in range(S.local.n)])
        out.append(np.einsum("nabcd,nai,nbj,nck,ndl->nijkl", T, Finv, Finv, Finv, Finv))
    return tuple(out)


@dataclass
class DecompositionFit:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    residual: np.ndarray
    convention: str
    flat: np.ndarray

    def at(self, k: int = 0) -> dict:
        return {"a": float(self.a[k]), "b": float(self.b[k]), "c": float(self.c[k]),
                "residual": float(self.residual[k]), "convention": self.convention,
                "flat_point": bool(self.flat[k])}


def _fit(Rf: np.ndarray, Jf: np.ndarray, convention: str) -> DecompositionFit:
    n = len(Rf)
    coef = np.zeros((n, 3))
    res = np.zeros(n)
    norms = np.sqrt((Rf**2).reshape(n, -1).sum(axis=1))
    flat = norms < FLAT_THRESHOLD
    h = h_matrix(convention)
    for k in np.flatnonzero(~flat):
        A = np.stack([t.ravel() for t in basis_frame(h, Jf[k])], axis=1)
        x, *_ = np.linalg.lstsq(A, Rf[k].ravel(), rcond=None)
        coef[k] = x
        res[k] = np.linalg.norm(A @ x - Rf[k].ravel()) / norms[k]
    return DecompositionFit(coef[:, 0], coef[:, 1], coef[:, 2], res, convention, flat)


def fit_decomposition(S: Split, convention: str | None = None) -> DecompositionFit:
    """Least-squares ``R = a Pi + b Phi + c Psi`` over all 256 frame components.

    With ``convention=None`` both h conventions are tried and the one with the
    smaller worst-case residual is returned.
    """
    Rf = riemann_frame(S)
    Jf = _frame_J(S)
    if convention is not None:
        return _fit(Rf, Jf, convention)
    fits = [_fit(Rf, Jf, c) for c in H_CONVENTIONS]
    return min(fits, key=lambda f: float(f.residual.max()))


def unit_vectors(s: float, phases: int) -> np.ndarray:
    """Unit frame vectors X with |X_Delta|^2 = s and swept rotation phases."""
    k = np.arange(phases)
    p1 = 2 * np.pi * k / phases
    p2 = 2 * np.pi * ((k * 0.6180339887498949) % 1.0)
    a, b = np.sqrt(s), np.sqrt(1.0 - s)
    return np.stack([a * np.cos(p1), a * np.sin(p1), b * np.cos(p2), b * np.sin(p2)], axis=1)


def qch_sampling(S: Split, phases: int = 16) -> np.ndarray:
    """Per point, the max over s-classes of the spread of K(X) = R(X,JX,JX,X)."""
    Rf = riemann_frame(S)
    Jf = _frame_J(S)
    spread = np.zeros(S.local.n)
    for s in S_CLASSES:
        X = unit_vectors(s, phases)
        JX = np.einsum("nab,kb->nka", Jf, X)
        K = np.einsum("nxyzu,kx,nky,nkz,ku->nk", Rf, X, JX, JX, X)
        spread = np.maximum(spread, K.max(axis=1) - K.min(axis=1))
    return spread


def semi_symmetry(L: Local, F: np.ndarray | None = None) -> np.ndarray:
    """Per-point max over frame 6-tuples of |(R(X,Y).R)(Z,U,V,W)|."""
    from .calculus import orthonormal_frame

    F = orthonormal_frame(L) if F is None else F
    RR = curvature_action(L.riemann, L.riemann_up)
    RRf = frame_components(RR, F, "llllll")
    return np.abs(RRf).reshape(len(RRf), -1).max(axis=1)


@dataclass
class FitCheck:
    """Per-point best-fit scalar and residual of a tensor against a model tensor."""

    c: np.ndarray
    residual: np.ndarray

    @property
    def spread(self) -> float:
        return float(self.c.max() - self.c.min())

    @property
    def mean(self) -> float:
        return float(self.c.mean())

    def passed(self, tol: float) -> bool:
        return bool(self.residual.max() < tol and self.spread < tol and abs(self.mean) > tol)


def _fit_scalar(M: np.ndarray, T: np.ndarray) -> FitCheck:
    c = np.einsum("nij,nij->n", M, T) / np.einsum("nij,nij->n", T, T)
    r = np.sqrt(((M - c[:, None, None] * T) ** 2).sum(axis=(1, 2)))
    return FitCheck(c, r)


def hessian_field(L: Local, phi: Expr) -> FitCheck:
    """Fit ``H^phi = c g`` pointwise in an orthonormal frame."""
    from .calculus import orthonormal_frame

    F = orthonormal_frame(L)
    Hf = frame_components(hessian(L, L.scalar(phi)).val, F, "ll")
    return _fit_scalar(Hf, np.broadcast_to(np.eye(DIM), Hf.shape))


def parallel_homothety(L: Local, V: Jet, mode: str = "identity") -> FitCheck:
    """Fit ``nabla V = c Id`` (``mode="identity"``) or ``c J`` (``mode="J"``)."""
    from .calculus import orthonormal_frame

    F = orthonormal_frame(L)
    M = frame_components(covariant_derivative(L, V).val, F, "ul")
    if mode == "identity":
        T = np.broadcast_to(np.eye(DIM), M.shape)
    elif mode == "J":
        T = frame_components(L.J.val, F, "ul")
    else:
        raise ValueError("mode must be 'identity' or 'J'")
    return _fit_scalar(M, T)


def theorem8(S: Split) -> dict[str, np.ndarray]:
    """Curvature identity g(R(Z,X)xi, Y) = 0 for xi in Delta, X, Y, Z in E, with
    its hypotheses and two measures of the anti-self-dual part of d theta."""
    Fo = Foliation(S)
    Rf = riemann_frame(S)
    curv = np.abs(Rf[:, 2:, 2:, :2, 2:]).reshape(S.local.n, -1).max(axis=1)
    dth = Fo.herm.dtheta
    dthf = frame_components(dth, S.frame, "ll")
    Jf = _frame_J(S)
    anti = np.einsum("nca,ndb,ncd->nab", Jf, Jf, dthf) + dthf
    starI = hodge_star_2form(S.local, dth, Fo.herm.os.omega_I.val)
    asd = frame_components(0.5 * (dth - starI), S.frame, "ll")
    return {
        "curvature": curv,
        "totally_geodesic": Fo.totally_geodesic(),
        "holomorphic": Fo.holomorphic(),
        "dtheta_J_anti_invariance": np.abs(anti).reshape(S.local.n, -1).max(axis=1),
        "dtheta_asd_I": np.abs(asd).reshape(S.local.n, -1).max(axis=1),
    }


SEMISYM_IDENTITIES = (
    "nabla_xi_theta",
    "xi_theta2",
    "bracket_xi_Jxi",
    "eta_holomorphic",
    "J_eta_divergence_free",
)


def semisym_identities(S: Split) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Residuals of the semi-symmetric block identities with xi := theta^#.

    Returns (residuals, vacuous mask); vacuous points (theta = 0) get residual 0.
    """
    H = Hermitian(S)
    n = S.local.n
    t2 = H.local.inner(H.theta_sharp, H.theta_sharp)
    vac = t2.val < VACUOUS_THRESHOLD
    out = {k: np.zeros(n) for k in SEMISYM_IDENTITIES}
    if vac.all():
        return out, vac
    keep = np.flatnonzero(~vac)
    S2 = Split(Local(S.local.chart, S.local.points[keep]), S.dist)
    L = S2.local
    H = Hermitian(S2)
    xi = H.theta_sharp  # order 1
    t2 = L.inner(xi, xi)
    Jxi = L.apply_J(xi)
    gn = lambda X: np.sqrt(np.einsum("ni,nij,nj->n", X, L.g.val, X))
    Dxi = covariant_derivative(L, xi).val
    r1 = np.einsum("nij,nj->ni", Dxi, xi.val) + 0.5 * t2.val[:, None] * xi.val
    r2 = np.einsum("ni,ni->n", t2.partial().val, xi.val) + t2.val**2
    r3 = lie_bracket(xi, Jxi).val + t2.val[:, None] * Jxi.val
    eta = J.mul(J.reciprocal(t2), xi)
    Jeta = L.apply_J(eta)
    F = S2.frame
    Jv = L.J.val

    def holo(V: Jet) -> np.ndarray:
        D = covariant_derivative(L, V).val
        a = np.einsum("nij,njk,nka->nia", D, Jv, F)  # nabla_{J e_a} V
        b = np.einsum("nij,njk,nka->nia", Jv, D, F)  # J nabla_{e_a} V
        return gn_cols(a - b).max(axis=1)

    def gn_cols(X: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("nia,nij,nja->na", X, L.g.val, X))

    div = np.abs(np.einsum("nii->n", covariant_derivative(L, Jeta).val))
    vals = {
        "nabla_xi_theta": gn(r1),
        "xi_theta2": np.abs(r2),
        "bracket_xi_Jxi": gn(r3),
        "eta_holomorphic": holo(eta),
        "J_eta_divergence_free": np.maximum(div, holo(Jeta)),
    }
    for k, v in vals.items():
        out[k][keep] = v
    return out, vac


def curvature_annihilates(S: Split) -> np.ndarray:
    """max |R(X,Y) xi| and |R(X,Y) J xi| over frame X, Y, with xi = e1."""
    Rf = riemann_frame(S)
    return np.abs(Rf[:, :, :, :2, :]).reshape(S.local.n, -1).max(axis=1)


def gray_g2(S: Split, variant: str = "symmetric") -> np.ndarray:
    from .hermitian import gray_g2_residual

    H = Hermitian(S)
    return gray_g2_residual(S.local.riemann, H.os.I.val, S.frame, S.local.J.val, variant)


# -- Hessian-potential pipeline-------------------------------------------------


@dataclass
class Stage:
    name: str
    anchor: str
    residual: float
    tol: float
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class Theorem9Result:
    stages: list[Stage]
    prepared: Prepared
    audits: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    @property
    def failing_stage(self) -> str | None:
        return next((s.name for s in self.stages if not s.passed), None)

    @property
    def counterexample(self) -> bool:
        """The Hessian condition holds but a consequence fails."""
        return self.stages[0].passed and not self.passed


def theorem9_point_metrics(chart: Chart, phi: Expr, points, convention: str = "E",
                           phases: int = 16) -> dict[str, np.ndarray]:
    """Per-point quantities behind every Hessian-pipeline stage (admissible points only)."""
    from .foliation import foliation_residuals

    dist = Distribution(gradient_of=phi)
    L = Local(chart, points)
    hs = hessian_field(L, phi)
    xi = dist.field(L)
    h1 = parallel_homothety(L, xi, "identity")
    h2 = parallel_homothety(L, L.apply_J(xi), "J")
    fol, _, _ = foliation_residuals(chart, dist, points)
    S = Split(L, dist)
    fit = fit_decomposition(S, convention)
    m = {
        "hessian_c": hs.c, "hessian_residual": hs.residual,
        "homothety_c_identity": h1.c, "homothety_residual_identity": h1.residual,
        "homothety_c_J": h2.c, "homothety_residual_J": h2.residual,
        "fit_a": fit.a, "fit_b": fit.b, "fit_c": fit.c, "fit_residual": fit.residual,
        "curvature_annihilates_xi": curvature_annihilates(S),
        "semi_symmetry": semi_symmetry(L),
        "qch_sampling": qch_sampling(S, phases),
    }
    m.update({f"foliation.{k}": v for k, v in fol.items()})
    return m


T9_FOLIATION_REQUIRED = ("frobenius", "totally_geodesic", "holomorphic", "conformal", "nijenhuis_I")


def theorem9_stages(m: dict[str, np.ndarray], prep: Prepared, tol_algebraic: float = TOL_ALGEBRAIC,
                    tol_derived: float = TOL_DERIVED, convention: str = "E") -> Theorem9Result:
    """Reduce per-point metrics to the ordered stage verdicts."""
    from .foliation import AUDITS, run_audit

    stages = []
    hs = FitCheck(m["hessian_c"], m["hessian_residual"])
    stages.append(Stage("hessian", "H^phi = c g with constant c != 0", float(hs.residual.max()),
                        tol_algebraic, hs.passed(tol_algebraic),
                        {"c": hs.mean, "c_spread": hs.spread}))

    h1 = FitCheck(m["homothety_c_identity"], m["homothety_residual_identity"])
    h2 = FitCheck(m["homothety_c_J"], m["homothety_residual_J"])
    stages.append(Stage("parallel_homothety", "nabla xi = c Id and nabla (J xi) = c J",
                        float(max(h1.residual.max(), h2.residual.max())), tol_algebraic,
                        h1.passed(tol_algebraic) and h2.passed(tol_algebraic),
                        {"c_identity": h1.mean, "c_J": h2.mean}))

    fol = {k.split(".", 1)[1]: v for k, v in m.items() if k.startswith("foliation.")}
    audits = [run_audit(a, fol, prep.points, prep.index, tol_algebraic, tol_derived) for a in AUDITS]
    n_cex = sum(a.n_counterexamples for a in audits)
    worst = max(float(fol[k].max()) for k in T9_FOLIATION_REQUIRED)
    stages.append(Stage("foliation", "Delta = span{xi, J xi} totally geodesic, holomorphic, conformal; I Hermitian",
                        worst, tol_algebraic, worst < tol_algebraic and n_cex == 0,
                        {"counterexamples": n_cex}))

    ab = float(np.maximum(np.abs(m["fit_a"]), np.abs(m["fit_b"])).max())
    fr = float(m["fit_residual"].max())
    stages.append(Stage("qch_fit", "R = c Psi (a = b = 0)", max(fr, ab), tol_derived,
                        fr < tol_derived and ab < tol_derived,
                        {"a_max": float(np.abs(m["fit_a"]).max()), "b_max": float(np.abs(m["fit_b"]).max()),
                         "c_mean": float(m["fit_c"].mean()), "fit_residual": fr, "h_convention": convention}))

    for name, anchor, tol in (
        ("curvature_annihilates_xi", "R(X,Y) xi = R(X,Y) J xi = 0", tol_derived),
        ("semi_symmetry", "R.R = 0", tol_derived),
        ("qch_sampling", "K(X) depends only on the point and |X_Delta|", tol_algebraic),
    ):
        r = float(m[name].max())
        stages.append(Stage(name, anchor, r, tol, r < tol))
    return Theorem9Result(stages, prep, audits)


def theorem9_suite(chart: Chart, phi: Expr, points, tol_algebraic: float = TOL_ALGEBRAIC,
                   tol_derived: float = TOL_DERIVED, convention: str = "E", phases: int = 16) -> Theorem9Result:
    """Hessian -> parallel homothety -> foliation -> QCH fit -> R.R -> sampling.

    Every stage is evaluated; ``failing_stage`` names the first one that fails.
    """
    dist = Distribution(gradient_of=phi)
    prep = prepare(chart, dist, points, extra=[phi])
    if len(prep.points) == 0:
        raise ValueError("empty sample plan")
    m = theorem9_point_metrics(chart, phi, prep.points, convention, phases)
    return theorem9_stages(m, prep, tol_algebraic, tol_derived, convention)


# -- one-point wrappers ---------------------------------------------------------


def basis_tensors_at(c: Chart, d: Distribution, p, convention: str = "E"):
    Pi, Phi, Psi = basis_tensors(Split(Local(c, p), d), convention)
    return Pi[0], Phi[0], Psi[0]


def fit_decomposition_at(c: Chart, d: Distribution, p, convention: str | None = None) -> dict:
    return fit_decomposition(Split(Local(c, p), d), convention).at(0)


def qch_sampling_residual(c: Chart, d: Distribution, p, phases: int = 16) -> float:
    return float(qch_sampling(Split(Local(c, p), d), phases).max())


def semi_symmetry_residual(c: Chart, p) -> float:
    return float(semi_symmetry(Local(c, p)).max())


def hessian_field_check(c: Chart, phi: Expr, samples) -> tuple[float, float]:
    """(best c, worst residual) over the samples."""
    fc = hessian_field(Local(c, samples), phi)
    return fc.mean, float(fc.residual.max())


def parallel_homothety_check(c: Chart, V, mode: str, samples) -> tuple[float, float]:
    """``V`` is four component expressions or a Distribution (its field)."""
    L = Local(c, samples)
    if isinstance(V, Distribution):
        Vj = V.field(L)
    else:
        Vj = J.stack([L.scalar(e) for e in V])
    fc = parallel_homothety(L, Vj, mode)
    return fc.mean, float(fc.residual.max())


def theorem8_curvature_residual(c: Chart, d: Distribution, samples) -> dict[str, float]:
    r = theorem8(Split(Local(c, samples), d))
    return {k: float(v.max()) for k, v in r.items()}


def semisym_identities_residual(c: Chart, d: Distribution, samples) -> dict:
    r, vac = semisym_identities(Split(Local(c, samples), d))
    out = {k: float(v.max()) for k, v in r.items()}
    out["vacuous"] = bool(vac.all())
    return out
