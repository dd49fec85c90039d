"""Residual predicates for complex 2-plane distributions on Kähler surfaces,
and a pointwise audit of the equivalences between them.

Every residual is evaluated in the orthonormal adapted frame (e1, e2 = J e1)
of Delta and (e3, e4 = J e3) of E.  The quantities involved are tensorial in
the frame fields (E-parts of Lie derivatives along Delta, O'Neill brackets,
covariant derivatives), so unit frame fields suffice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import jet as J
from .calculus import (
    covariant_derivative,
    covariant_derivative_2tensor,
    covariant_derivative_endo,
    frame_components,
    lie_bracket,
    lie_derivative_endo,
    lie_derivative_metric,
)
from .geometry import Chart, Distribution, Local, Split, screen
from .hermitian import Hermitian, nijenhuis_norm
from .jet import DIM

TOL_ALGEBRAIC = 1e-8
TOL_DERIVED = 1e-6
FAIL_FACTOR = 10.0

DELTA, EPERP = (0, 1), (2, 3)


def _gnorm(L: Local, X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("n...i,nij,n...j->n...", X, L.g.val, X), 0.0))


class Foliation:
    """All foliation predicates of one distribution on a batch of points."""

    def __init__(self, S: Split):
        self.split = S
        self.local = S.local
        self.herm = Hermitian(S)

    # -- building blocks ------------------------------------------------------

    @cached_property
    def F(self) -> np.ndarray:
        return self.split.frame

    @cached_property
    def nabla_e(self) -> list[np.ndarray]:
        """``D[a][n, i, j] = (nabla_j e_a)^i``."""
        return [covariant_derivative(self.local, e).val for e in self.split.frame_fields]

    def _cov(self, a: int, b: int) -> np.ndarray:
        """``nabla_{e_b} e_a`` (coordinate components)."""
        return np.einsum("nij,nj->ni", self.nabla_e[a], self.F[:, :, b])

    def _proj(self, X: np.ndarray, part: str) -> np.ndarray:
        P = (self.split.P_delta if part == "delta" else self.split.P_E).val
        return np.einsum("nij,nj->ni", P, X)

    def _dual(self, X: np.ndarray) -> np.ndarray:
        """Frame components of vectors X[n, i]."""
        return np.einsum("nai,ni->na", np.linalg.inv(self.F), X)

    @cached_property
    def lie_g(self) -> list[np.ndarray]:
        """Frame components of L_{e_a} g for a in Delta."""
        return [
            frame_components(lie_derivative_metric(self.local, self.split.frame_fields[a]).val, self.F, "ll")
            for a in DELTA
        ]

    # -- predicates -----------------------------------------------------------

    def frobenius(self) -> np.ndarray:
        L, S = self.local, self.split
        v = S.v
        br = lie_bracket(v, L.apply_J(v)).val
        return _gnorm(L, self._proj(br, "E")) / (1.0 + _gnorm(L, br))

    def frobenius_E(self) -> np.ndarray:
        e3, e4 = self.split.e3, self.split.e4
        br = lie_bracket(e3, e4).val
        return _gnorm(self.local, self._proj(br, "delta")) / (1.0 + _gnorm(self.local, br))

    @cached_property
    def _theorem1(self) -> tuple[np.ndarray, np.ndarray]:
        """Least-squares ``d omega_2 = phi ^ omega_2`` in the frame.

        Returns (relative residual, phi in frame components).
        """
        from .hermitian import THREE_FORM_INDICES, WEDGE_1_2

        d2 = frame_components(J.exterior_derivative(self.herm.os.omega2).val, self.F, "lll")
        w2 = frame_components(self.herm.os.omega2.val, self.F, "ll")
        M = np.einsum("cmjk,njk->ncm", WEDGE_1_2, w2)
        rhs = np.stack([d2[:, i, j, k] for i, j, k in THREE_FORM_INDICES], axis=1)
        phi = np.stack([np.linalg.lstsq(M[n], rhs[n], rcond=None)[0] for n in range(len(M))])
        res = np.linalg.norm(np.einsum("ncm,nm->nc", M, phi) - rhs, axis=1)
        return res / (1.0 + np.linalg.norm(rhs, axis=1)), phi

    def theorem1(self) -> np.ndarray:
        return self._theorem1[0]

    def theorem1_phi(self) -> np.ndarray:
        return self._theorem1[1]

    def totally_geodesic(self) -> np.ndarray:
        r = [_gnorm(self.local, self._proj(self._cov(a, b), "E")) for a in DELTA for b in DELTA]
        return np.max(r, axis=0)

    def _lie_J(self, a: int) -> np.ndarray:
        """Frame components ``M[n, c, b]`` of ``(L_{e_a} J) e_b``."""
        LJ = lie_derivative_endo(self.split.frame_fields[a], self.local.J).val
        return frame_components(LJ, self.F, "ul")

    def _holo(self, cols) -> np.ndarray:
        r = [np.sqrt((self._lie_J(a)[:, 2:, cols] ** 2).sum(axis=1)).max(axis=1) for a in DELTA]
        return np.max(r, axis=0)

    def holomorphic(self) -> np.ndarray:
        return self._holo([0, 1, 2, 3])

    def quasi_holomorphic(self) -> np.ndarray:
        return self._holo([2, 3])

    @cached_property
    def alpha(self) -> np.ndarray:
        """Best-fit ``alpha(e_a)`` with ``L_{e_a} g = alpha g`` on E; shape (n, 2)."""
        return np.stack([0.5 * (m[:, 2, 2] + m[:, 3, 3]) for m in self.lie_g], axis=1)

    def conformal(self) -> np.ndarray:
        r = []
        for k, m in enumerate(self.lie_g):
            block = m[:, 2:, 2:] - self.alpha[:, k, None, None] * np.eye(2)
            r.append(np.sqrt((block**2).sum(axis=(1, 2))))
        return np.max(r, axis=0)

    @cached_property
    def theta_frame(self) -> np.ndarray:
        return np.einsum("ni,nia->na", self.herm.theta.val, self.F)

    def alpha_theta(self) -> np.ndarray:
        """``|alpha(e_a) - theta(e_a)|`` over the Delta frame."""
        return np.abs(self.alpha - self.theta_frame[:, :2]).max(axis=1)

    def _E_gram(self, a: int) -> np.ndarray:
        """``A[n, x, y] = g(nabla_{e_x} e_a, e_y)`` for x, y in E."""
        Fg = np.einsum("nij,njb->nib", self.local.g.val, self.F)
        D = np.einsum("nij,njx->nix", self.nabla_e[a], self.F)
        return np.einsum("nix,niy->nxy", D, Fg)[:, 2:, 2:]

    def _star_rhs(self, a: int, sign: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """``theta(xi)`` and ``(J theta)(xi) = -theta(J xi)`` for xi = e_a."""
        th = self.theta_frame
        Jxi = {0: (1, 1.0), 1: (0, -1.0)}[a]  # J e1 = e2, J e2 = -e1
        return th[:, a], -Jxi[1] * th[:, Jxi[0]] * sign

    _OMEGA_E = np.array([[0.0, 1.0], [-1.0, 0.0]])  # omega(e3, e4) = g(J e3, e4) = 1

    def star_identity(self) -> np.ndarray:
        r = []
        for a in DELTA:
            A = self._E_gram(a)
            t, jt = self._star_rhs(a)
            d = 2 * A - t[:, None, None] * np.eye(2) - jt[:, None, None] * self._OMEGA_E
            r.append(np.abs(d).max(axis=(1, 2)))
        return np.max(r, axis=0)

    def _corollary1(self, sign: float) -> np.ndarray:
        r = []
        for a in DELTA:
            A = self._E_gram(a)
            _, jt = self._star_rhs(a)
            d = A - np.swapaxes(A, 1, 2) - sign * jt[:, None, None] * self._OMEGA_E
            r.append(np.abs(d).max(axis=(1, 2)))
        br = lie_bracket(self.split.e3, self.split.e4).val
        Jts = np.einsum("nij,nj->ni", self.local.J.val, self.herm.theta_sharp.val)
        r.append(_gnorm(self.local, self._proj(br, "delta") + sign * Jts))
        return np.max(r, axis=0)

    def corollary1(self) -> np.ndarray:
        return self._corollary1(1.0)

    def corollary1_opposite(self) -> np.ndarray:
        """The same identities with the sign of J theta flipped (convention audit)."""
        return self._corollary1(-1.0)

    @cached_property
    def nabla_I(self) -> np.ndarray:
        return frame_components(covariant_derivative_endo(self.local, self.herm.os.I).val, self.F, "ull")

    def ker_nabla_I(self) -> np.ndarray:
        """max over X in the Delta frame of the operator norm of nabla_X I."""
        N = self.nabla_I[..., list(DELTA)]  # [n, c, b, x]
        return np.sqrt((N**2).sum(axis=1)).max(axis=(1, 2))

    def almost_kahler(self) -> np.ndarray:
        d = frame_components(self.herm.dOmega_I.val, self.F, "lll")
        return np.abs(d).reshape(len(d), -1).max(axis=1)

    def nijenhuis_I(self) -> np.ndarray:
        return nijenhuis_norm(self.local, self.herm.os.I, self.F)

    def d_alpha(self) -> np.ndarray:
        """|d alpha| with alpha = alpha(e1) e1^b + alpha(e2) e2^b (zero on E)."""
        L, S = self.local, self.split
        form = None
        for a in DELTA:
            e = S.frame_fields[a]
            Lg = lie_derivative_metric(L, e)
            aE = (
                J.einsum("i,i->", J.einsum("ij,j->i", Lg, S.e3), S.e3)
                + J.einsum("i,i->", J.einsum("ij,j->i", Lg, S.e4), S.e4)
            ) * 0.5
            term = J.mul(aE, L.lower(e).truncate(1))
            form = term if form is None else form + term
        d = frame_components(J.exterior_derivative(form).val, self.F, "ll")
        return np.abs(d).reshape(len(d), -1).max(axis=1)

    def homothetic(self) -> np.ndarray:
        return np.maximum(self.conformal(), self.d_alpha())

    def lemma(self) -> np.ndarray:
        """max |(nabla_X omega_2)(Y, Z)| for X in Delta, Y, Z in E."""
        D = covariant_derivative_2tensor(self.local, self.herm.os.omega2).val
        Df = frame_components(D, self.F, "lll")
        return np.abs(Df[:, 2:, 2:, :2]).reshape(len(Df), -1).max(axis=1)

    @cached_property
    def _dtheta_frame(self) -> np.ndarray:
        return frame_components(self.herm.dtheta, self.F, "ll")

    def dtheta_delta(self) -> np.ndarray:
        return np.abs(self._dtheta_frame[:, 0, 1])

    def dtheta_E(self) -> np.ndarray:
        return np.abs(self._dtheta_frame[:, 2, 3])

    def theta_E(self) -> np.ndarray:
        return self.herm.theta_E_residual()

    def lee(self) -> np.ndarray:
        return self.herm.lee_residual()

    PREDICATES = (
        "frobenius",
        "frobenius_E",
        "theorem1",
        "totally_geodesic",
        "holomorphic",
        "quasi_holomorphic",
        "conformal",
        "alpha_theta",
        "star_identity",
        "corollary1",
        "corollary1_opposite",
        "ker_nabla_I",
        "almost_kahler",
        "nijenhuis_I",
        "d_alpha",
        "homothetic",
        "lemma",
        "dtheta_delta",
        "dtheta_E",
        "theta_E",
        "lee",
    )

    def residuals(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name)() for name in self.PREDICATES}


# Predicates computed through the Lee-form solve or a least-squares fit use the
# derived tolerance; the others are jet-exact.
DERIVED = frozenset(
    {"theorem1", "alpha_theta", "star_identity", "corollary1", "corollary1_opposite", "d_alpha",
     "homothetic", "dtheta_delta", "dtheta_E", "theta_E", "lee"}
)


def tolerance_for(name: str, tol_algebraic: float = TOL_ALGEBRAIC, tol_derived: float = TOL_DERIVED) -> float:
    return tol_derived if name in DERIVED else tol_algebraic


# -- sample preparation ---------------------------------------------------------


@dataclass
class Prepared:
    """Admissible subset of a sample plan and the reasons for every skip."""

    points: np.ndarray
    index: np.ndarray
    skipped: dict[int, str]
    total: int

    @property
    def skipped_fraction(self) -> float:
        return len(self.skipped) / max(self.total, 1)


def prepare(chart: Chart, dist: Distribution | None, points, extra=()) -> Prepared:
    """Drop points where the data cannot be evaluated or v vanishes."""
    pts = np.asarray(points, dtype=float).reshape(-1, DIM)
    exprs = list(extra) + (dist.exprs() if dist is not None else [])
    ok, reasons = screen(chart, pts, exprs)
    skipped = {i: reasons[i] for i in np.flatnonzero(~ok)}
    if dist is not None and ok.any():
        idx = np.flatnonzero(ok)
        L = Local(chart, pts[idx])
        n2 = L.norm2(dist.field(L)).val
        for k in np.flatnonzero(n2 < 1e-24):
            skipped[int(idx[k])] = "spanning field vanishes"
            ok[idx[k]] = False
    idx = np.flatnonzero(ok)
    return Prepared(pts[idx], idx, {int(k): v for k, v in sorted(skipped.items())}, len(pts))


# -- audits ---------------------------------------------------------------------


@dataclass(frozen=True)
class Audit:
    """A pointwise equivalence (``iff``), implication (``implies``) or identity
    (``holds``) between predicate sets.

    Each side holds when every listed residual is small.  ``condition``
    restricts the audit to points where the listed predicates hold.
    """

    id: str
    anchor: str
    kind: str
    sides: tuple[tuple[str, ...], ...]
    condition: tuple[str, ...] = ()


AUDITS = (
    Audit("thm1", "Frobenius integrability <=> d omega_2 = phi ^ omega_2 solvable", "iff",
          (("frobenius",), ("theorem1",))),
    Audit("thm2", "I integrable and Delta integrable <=> Delta holomorphic and totally geodesic", "iff",
          (("nijenhuis_I", "frobenius"), ("totally_geodesic", "holomorphic"))),
    Audit("thm3", "I integrable => star identity on E (Delta a foliation)", "implies",
          (("nijenhuis_I",), ("star_identity",)), ("frobenius",)),
    Audit("thm3_converse", "totally geodesic and star identity => I integrable", "implies",
          (("totally_geodesic", "star_identity"), ("nijenhuis_I",)), ("frobenius",)),
    Audit("thm4", "E integrable <=> I almost Kähler (Delta a foliation)", "iff",
          (("frobenius_E",), ("almost_kahler",)), ("frobenius",)),
    Audit("thm5", "Delta in ker nabla I <=> Delta totally geodesic", "iff",
          (("ker_nabla_I",), ("totally_geodesic",))),
    Audit("thm6", "conformal <=> quasi-holomorphic <=> star identity (Delta a foliation)", "iff",
          (("conformal",), ("quasi_holomorphic",), ("star_identity",)), ("frobenius",)),
    Audit("cor2", "conformal and totally geodesic => I Hermitian (Delta a foliation)", "implies",
          (("conformal", "totally_geodesic"), ("nijenhuis_I",)), ("frobenius",)),
)


# Identities asserted outright (``holds``): any failing point is a counterexample.
IDENTITY_AUDITS = (
    Audit("lemma", "(nabla_X omega_2)(Y,Z) = 0 for X in Delta, Y, Z in E", "holds", (("lemma",),)),
    Audit("cor1", "antisymmetric identity and [X,Y]_Delta formula (Delta a foliation)", "holds",
          (("corollary1",),), ("frobenius",)),
    Audit("remark_dtheta", "d theta vanishes on Delta and on E (Delta a foliation)", "holds",
          (("dtheta_delta", "dtheta_E"),), ("frobenius",)),
    Audit("lee_delta", "d omega_2 = theta ^ omega_2 with theta^# in Delta (Delta a foliation)", "holds",
          (("lee", "theta_E"),), ("frobenius",)),
)


PASS, FAIL, UNDECIDED = "pass", "fail", "indeterminate"


def band(residual: np.ndarray, tol: float) -> np.ndarray:
    """Two-band classification: pass < tol, fail > FAIL_FACTOR * tol."""
    out = np.full(residual.shape, UNDECIDED, dtype=object)
    out[residual < tol] = PASS
    out[residual > FAIL_FACTOR * tol] = FAIL
    return out


@dataclass
class AuditResult:
    id: str
    anchor: str
    kind: str
    tol: float
    counts: dict[str, int]
    counterexamples: list[dict] = field(default_factory=list)

    @property
    def n_counterexamples(self) -> int:
        return self.counts["counterexample"]


def run_audit(a: Audit, res: dict[str, np.ndarray], points: np.ndarray, index: np.ndarray,
              tol_algebraic: float = TOL_ALGEBRAIC, tol_derived: float = TOL_DERIVED,
              max_witnesses: int = 5) -> AuditResult:
    names = [n for side in a.sides for n in side]
    tol = max(tolerance_for(n, tol_algebraic, tol_derived) for n in names)
    n = len(points)
    if a.condition:
        ctol = max(tolerance_for(c, tol_algebraic, tol_derived) for c in a.condition)
        cond = np.max([res[c] for c in a.condition], axis=0) < ctol
    else:
        cond = np.ones(n, dtype=bool)
    side_res = [np.max([res[nm] for nm in side], axis=0) for side in a.sides]
    states = [band(r, tol) for r in side_res]
    counts = {"counterexample": 0, "consistent": 0, "indeterminate": 0, "not_applicable": 0}
    witnesses = []
    for k in range(n):
        if not cond[k]:
            counts["not_applicable"] += 1
            continue
        st = [s[k] for s in states]
        if a.kind == "iff":
            bad = PASS in st and FAIL in st
        elif a.kind == "holds":
            bad = FAIL in st
        else:
            bad = st[0] == PASS and FAIL in st[1:]
        if bad:
            counts["counterexample"] += 1
            if len(witnesses) < max_witnesses:
                witnesses.append({
                    "sample": int(index[k]),
                    "point": [float(x) for x in points[k]],
                    "residuals": [float(r[k]) for r in side_res],
                })
        elif UNDECIDED in st:
            counts["indeterminate"] += 1
        else:
            counts["consistent"] += 1
    return AuditResult(a.id, a.anchor, a.kind, tol, counts, witnesses)


@dataclass
class FoliationVerdict:
    """Residual statistics per predicate, verdicts and the implication audit."""

    residuals: dict[str, np.ndarray]
    stats: dict[str, dict[str, float]]
    verdicts: dict[str, bool]
    audits: list[AuditResult]
    alpha: np.ndarray
    theta: np.ndarray
    prepared: Prepared

    @property
    def counterexamples(self) -> int:
        return sum(a.n_counterexamples for a in self.audits)


def foliation_residuals(chart: Chart, dist: Distribution,
                        points) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray]:
    F = Foliation(Split(Local(chart, points), dist))
    return F.residuals(), F.alpha, F.theta_frame


def theorem_verdicts(chart: Chart, dist: Distribution, points, tol_algebraic: float = TOL_ALGEBRAIC,
                     tol_derived: float = TOL_DERIVED, audits=AUDITS) -> FoliationVerdict:
    """Evaluate every predicate on the plan and audit each asserted implication.

    The caller is responsible for having checked that the scene is Kähler.
    """
    prep = prepare(chart, dist, points)
    if len(prep.points) == 0:
        raise ValueError("empty sample plan")
    res, alpha, theta = foliation_residuals(chart, dist, prep.points)
    stats = {k: {"max": float(v.max()), "mean": float(v.mean())} for k, v in res.items()}
    verdicts = {k: bool(v.max() < tolerance_for(k, tol_algebraic, tol_derived)) for k, v in res.items()}
    results = [run_audit(a, res, prep.points, prep.index, tol_algebraic, tol_derived) for a in audits]
    return FoliationVerdict(res, stats, verdicts, results, alpha, theta, prep)


# -- one-point wrappers -----------------------------------------------------------


def _at(name: str, c: Chart, d: Distribution, p) -> float:
    F = Foliation(Split(Local(c, p), d))
    return float(getattr(F, name)().max())


def frobenius_residual(c, d, p) -> float:
    return _at("frobenius", c, d, p)


def theorem1_residual(c, d, p) -> float:
    return _at("theorem1", c, d, p)


def totally_geodesic_residual(c, d, p) -> float:
    return _at("totally_geodesic", c, d, p)


def holomorphic_residual(c, d, p) -> float:
    return _at("holomorphic", c, d, p)


def quasi_holomorphic_residual(c, d, p) -> float:
    return _at("quasi_holomorphic", c, d, p)


def conformal_residual(c, d, p) -> tuple[float, float, float]:
    """(residual, alpha(v), alpha(Jv)) with v the normalized spanning field."""
    F = Foliation(Split(Local(c, p), d))
    return float(F.conformal()[0]), float(F.alpha[0, 0]), float(F.alpha[0, 1])


def star_identity_residual(c, d, p) -> float:
    return _at("star_identity", c, d, p)


def corollary1_residual(c, d, p) -> float:
    return _at("corollary1", c, d, p)


def lemma_residual(c, d, p) -> float:
    return _at("lemma", c, d, p)
