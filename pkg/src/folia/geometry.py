"""Charts, metrics, complex structures, distributions and adapted frames.

Everything here is evaluated over a batch of points at once through
:class:`Local` (chart-level jets) and :class:`Split` (the Delta/E splitting
induced by a distribution).  The ``*_at`` functions are one-point wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import jet as J
from .expr import DomainError, Expr, diff, evaluate, eval_jet2, parse
from .jet import DIM, Jet

PAIRS = [(i, j) for i in range(DIM) for j in range(i, DIM)]
FORM_PAIRS = [(i, j) for i in range(DIM) for j in range(i + 1, DIM)]
STANDARD_J = np.array(
    [[0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0]]
)

PD_THRESHOLD = 1e-12
SEED_THRESHOLD = 1e-8
STRUCTURE_TOL = 1e-8


class GeometryError(ValueError):
    pass


class SingularMetricError(GeometryError):
    def __init__(self, message: str, point=None, pivot: int | None = None):
        self.point = point
        self.pivot = pivot
        super().__init__(message)


class DegenerateFormError(GeometryError):
    pass


class StructureError(GeometryError):
    """The configured J fails J^2 = -Id or g-compatibility."""


class ZeroSpanError(GeometryError):
    def __init__(self, point):
        self.point = tuple(float(x) for x in point)
        super().__init__(f"spanning vector field vanishes at {self.point}")


@dataclass(frozen=True)
class JSpec:
    """How J is specified: ``standard``, ``explicit`` (16 Exprs J^i_j row-major)
    or ``from-form`` (6 Exprs, upper triangle of the Kähler form)."""

    kind: str = "standard"
    components: tuple[Expr, ...] = ()

    def __post_init__(self):
        need = {"standard": 0, "explicit": 16, "from-form": 6}
        if self.kind not in need:
            raise ValueError(f"unknown jspec kind {self.kind!r}")
        if len(self.components) != need[self.kind]:
            raise ValueError(f"jspec {self.kind} needs {need[self.kind]} components")


@dataclass(frozen=True)
class Chart:
    coords: tuple[str, ...]
    metric: tuple[Expr, ...]  # upper triangle, PAIRS order
    jspec: JSpec = JSpec()
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.coords) != DIM or len(set(self.coords)) != DIM:
            raise ValueError("a chart needs four distinct coordinate names")
        if len(self.metric) != len(PAIRS):
            raise ValueError("metric needs 10 upper-triangle components")

    @classmethod
    def build(
        cls,
        coords: Sequence[str],
        metric: Mapping[tuple[int, int], str],
        params: Mapping[str, float] | None = None,
        jspec: str = "standard",
        components: Mapping[tuple[int, int], str] | Sequence[str] | None = None,
    ) -> Chart:
        """Convenience constructor from expression strings.

        ``metric`` and from-form ``components`` map index pairs to text and
        default to ``"0"``; explicit J takes a 16-element row-major sequence.
        """
        params = dict(params or {})
        p = lambda s: parse(s, coords, params)  # noqa: E731
        g = tuple(p(metric.get((i, j), metric.get((j, i), "0"))) for i, j in PAIRS)
        if jspec == "from-form":
            comps = tuple(p(components.get(ij, "0")) for ij in FORM_PAIRS)
        elif jspec == "explicit":
            comps = tuple(p(s) for s in components)
        else:
            comps = ()
        return cls(tuple(coords), g, JSpec(jspec, comps), params)

    def expr(self, text: str) -> Expr:
        return parse(text, self.coords, self.params)


@dataclass(frozen=True)
class Distribution:
    """A J-invariant 2-plane field span{v, Jv}.

    ``v`` is either given by four component expressions or as the metric
    gradient of a potential (``gradient_of``).
    """

    v: tuple[Expr, ...] | None = None
    gradient_of: Expr | None = None

    def __post_init__(self):
        if (self.v is None) == (self.gradient_of is None):
            raise ValueError("give exactly one of v or gradient_of")
        if self.v is not None and len(self.v) != DIM:
            raise ValueError("v needs four components")

    @classmethod
    def from_strings(cls, chart: Chart, v: Sequence[str]) -> Distribution:
        return cls(v=tuple(chart.expr(s) for s in v))

    def exprs(self) -> list[Expr]:
        if self.v is not None:
            return list(self.v)
        return [diff(self.gradient_of, i) for i in range(DIM)]

    def field(self, local: Local) -> Jet:
        comps = J.stack([local.scalar(e) for e in self.exprs()])
        if self.v is not None:
            return comps
        return J.einsum("ij,j->i", local.ginv, comps)


def screen(chart: Chart, points, extra: Sequence[Expr] = ()) -> tuple[np.ndarray, list[str]]:
    """Mask of points where metric, J data and ``extra`` are evaluable and g > 0."""
    pts = np.asarray(points, dtype=float).reshape(-1, DIM)
    ok = np.ones(len(pts), dtype=bool)
    reasons = [""] * len(pts)
    nmetric = len(chart.metric)
    for k, e in enumerate(list(chart.metric) + list(chart.jspec.components) + list(extra)):
        _, bad = evaluate(e, pts, chart.params)
        label = "singular metric: domain error in" if k < nmetric else "domain error in"
        for i in np.flatnonzero(bad & ok):
            reasons[i] = f"{label} {e}"
        ok &= ~bad
    if ok.any():
        idx = np.flatnonzero(ok)
        gv = _metric_values(chart, pts[idx])
        pivot, _ = pivoted_cholesky_check(gv)
        for k in np.flatnonzero(pivot >= 0):
            reasons[idx[k]] = f"singular metric (pivot {pivot[k]})"
        ok[idx[pivot >= 0]] = False
    return ok, reasons


def _metric_values(chart: Chart, pts) -> np.ndarray:
    g = np.zeros((len(pts), DIM, DIM))
    for (i, j), e in zip(PAIRS, chart.metric):
        v, _ = evaluate(e, pts, chart.params)
        g[:, i, j] = g[:, j, i] = v.val
    return g


def pivoted_cholesky_check(g: np.ndarray, threshold: float = PD_THRESHOLD):
    """Diagonal-pivoted Cholesky over a batch.

    Returns ``(failing_pivot, min_pivot)`` per matrix; ``failing_pivot`` is -1
    when every pivot exceeds ``threshold``.
    """
    a = np.array(g, dtype=float)
    n = a.shape[0]
    fail = np.full(n, -1)
    minpiv = np.full(n, np.inf)
    active = np.ones((n, DIM), dtype=bool)
    rows = np.arange(n)
    for step in range(DIM):
        diag = np.where(active, np.diagonal(a, axis1=1, axis2=2), -np.inf)
        k = np.argmax(diag, axis=1)
        piv = diag[rows, k]
        minpiv = np.minimum(minpiv, piv)
        newly = (piv <= threshold) & (fail < 0)
        fail[newly] = step
        piv = np.where(piv > threshold, piv, 1.0)
        col = a[rows, :, k] / np.sqrt(piv)[:, None]
        col = np.where(active, col, 0.0)
        a = a - col[:, :, None] * col[:, None, :]
        active[rows, k] = False
    return fail, minpiv


class Local:
    """Chart data at a batch of points: metric jets, connection, curvature, J."""

    def __init__(self, chart: Chart, points):
        self.chart = chart
        self.points = np.asarray(points, dtype=float).reshape(-1, DIM)
        self.n = len(self.points)

    def scalar(self, e: Expr) -> Jet:
        return eval_jet2(e, self.points, self.chart.params)

    @cached_property
    def g(self) -> Jet:
        comps = {}
        try:
            for ij, e in zip(PAIRS, self.chart.metric):
                comps[ij] = self.scalar(e)
        except DomainError as err:
            raise SingularMetricError(f"metric undefined: {err}", err.point) from err
        rows = [J.stack([comps[(min(i, j), max(i, j))] for j in range(DIM)]) for i in range(DIM)]
        g = J.stack(rows)
        fail, _ = pivoted_cholesky_check(g.val)
        if (fail >= 0).any():
            k = int(np.argmax(fail >= 0))
            raise SingularMetricError(
                f"metric not positive definite at {tuple(self.points[k])} (pivot {fail[k]})",
                tuple(self.points[k]),
                int(fail[k]),
            )
        return g

    @cached_property
    def ginv(self) -> Jet:
        return J.inv(self.g)

    @cached_property
    def christoffel(self) -> Jet:
        """``G[k, i, j] = Gamma^k_{ij}`` (order 1)."""
        dg = self.g.partial()  # dg[i, j, k] = d_k g_ij
        t = J.reindex("jli->lij", dg) + J.reindex("ilj->lij", dg) - J.reindex("ijl->lij", dg)
        return J.einsum("kl,lij->kij", self.ginv, t) * 0.5

    @cached_property
    def riemann_up(self) -> np.ndarray:
        """``Rup[l, k, i, j]``: R(d_i, d_j) d_k = Rup[l, k, i, j] d_l."""
        G = self.christoffel.val
        dG = self.christoffel.partial().val  # dG[k, i, j, m] = d_m Gamma^k_ij
        return (
            np.einsum("...ljki->...lkij", dG)
            - np.einsum("...likj->...lkij", dG)
            + np.einsum("...lim,...mjk->...lkij", G, G)
            - np.einsum("...ljm,...mik->...lkij", G, G)
        )

    @cached_property
    def riemann(self) -> np.ndarray:
        """``R[i, j, k, w] = g(R(d_i, d_j) d_k, d_w)``."""
        return np.einsum("...wl,...lkij->...ijkw", self.g.val, self.riemann_up)

    @cached_property
    def J(self) -> Jet:
        spec = self.chart.jspec
        if spec.kind == "standard":
            return Jet.const(np.broadcast_to(STANDARD_J, (self.n, DIM, DIM)))
        comps = [self.scalar(e) for e in spec.components]
        if spec.kind == "explicit":
            return J.stack([J.stack(comps[4 * i : 4 * i + 4]) for i in range(DIM)])
        w = self.form_from_components(comps)
        pf = (
            w.val[:, 0, 1] * w.val[:, 2, 3]
            - w.val[:, 0, 2] * w.val[:, 1, 3]
            + w.val[:, 0, 3] * w.val[:, 1, 2]
        )
        scale = np.sqrt(np.abs(np.linalg.det(self.g.val)))
        if np.any(np.abs(pf) < 1e-12 * np.maximum(scale, 1.0)):
            raise DegenerateFormError("Kähler form is degenerate")
        # omega(X, Y) = g(JX, Y) fixes J^i_j = g^{ik} Omega_{jk}
        return J.einsum("ik,jk->ij", self.ginv, w)

    @staticmethod
    def form_from_components(comps) -> Jet:
        zero = comps[0] * 0.0
        rows = [[zero] * DIM for _ in range(DIM)]
        for (i, j), c in zip(FORM_PAIRS, comps):
            rows[i][j] = c
            rows[j][i] = -c
        return J.stack([J.stack(r) for r in rows])

    @cached_property
    def kahler_form(self) -> Jet:
        """``omega[i, j] = g(J d_i, d_j)``."""
        return J.einsum("ki,kj->ij", self.J, self.g)

    def structure_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-point ``||J^2 + Id||`` and ``||J^T g J - g||`` (max norms)."""
        Jv, gv = self.J.val, self.g.val
        sq = np.abs(Jv @ Jv + np.eye(DIM)).max(axis=(1, 2))
        comp = np.abs(np.einsum("...ki,...kl,...lj->...ij", Jv, gv, Jv) - gv).max(axis=(1, 2))
        scale = np.abs(gv).max(axis=(1, 2))
        return sq, comp / scale

    def inner(self, X: Jet, Y: Jet) -> Jet:
        return J.einsum("i,i->", self.lower(X), Y)

    def lower(self, X: Jet) -> Jet:
        return J.einsum("ij,j->i", self.g, X)

    def raise_(self, a: Jet) -> Jet:
        return J.einsum("ij,j->i", self.ginv, a)

    def apply_J(self, X: Jet) -> Jet:
        return J.einsum("ij,j->i", self.J, X)

    def norm2(self, X: Jet) -> Jet:
        return J.einsum("i,i->", self.lower(X), X)


class Split:
    """The splitting TM = Delta + E induced by a distribution at a batch of points."""

    def __init__(self, local: Local, dist: Distribution):
        self.local = local
        self.dist = dist

    @cached_property
    def v(self) -> Jet:
        return self.dist.field(self.local)

    @cached_property
    def e1(self) -> Jet:
        n2 = self.local.norm2(self.v)
        zero = n2.val < 1e-24
        if zero.any():
            raise ZeroSpanError(self.local.points[int(np.argmax(zero))])
        return J.mul(J.reciprocal(J.sqrt(n2)), self.v)

    @cached_property
    def e2(self) -> Jet:
        return self.local.apply_J(self.e1)

    @cached_property
    def P_delta(self) -> Jet:
        L = self.local
        return J.einsum("i,j->ij", self.e1, L.lower(self.e1)) + J.einsum(
            "i,j->ij", self.e2, L.lower(self.e2)
        )

    @cached_property
    def P_E(self) -> Jet:
        eye = Jet.const(np.broadcast_to(np.eye(DIM), (self.local.n, DIM, DIM)))
        return eye - self.P_delta

    @cached_property
    def seed(self) -> np.ndarray:
        """Lowest coordinate index whose E-projection has norm > 1e-8."""
        g = self.local.g.val
        P = self.P_E.val
        norms = np.sqrt(np.maximum(np.einsum("nki,nkl,nli->ni", P, g, P), 0.0))
        ok = norms > SEED_THRESHOLD
        return np.argmax(ok, axis=1)

    @cached_property
    def e3(self) -> Jet:
        w = np.zeros((self.local.n, DIM))
        w[np.arange(self.local.n), self.seed] = 1.0
        u = J.einsum("ij,j->i", self.P_E, Jet.const(w))
        return J.mul(J.reciprocal(J.sqrt(self.local.norm2(u))), u)

    @cached_property
    def e4(self) -> Jet:
        return self.local.apply_J(self.e3)

    @cached_property
    def frame_fields(self) -> list[Jet]:
        return [self.e1, self.e2, self.e3, self.e4]

    @cached_property
    def frame(self) -> np.ndarray:
        """``F[n, i, a]``: coordinate components of frame vector e_a."""
        return np.stack([e.val for e in self.frame_fields], axis=-1)

    def project(self, X: Jet, part: str = "delta") -> Jet:
        P = self.P_delta if part == "delta" else self.P_E
        return J.einsum("ij,j->i", P, X)


# -- one-point operations -------------------------------------------------------


@dataclass(frozen=True)
class MetricValue:
    g: np.ndarray
    ginv: np.ndarray
    jet: Jet


@dataclass(frozen=True)
class AdaptedFrame:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.stack([self.e1, self.e2, self.e3, self.e4], axis=-1)


def metric_at(chart: Chart, p) -> MetricValue:
    L = Local(chart, p)
    g = L.g
    return MetricValue(g.val[0], L.ginv.val[0], g)


def complex_structure_at(chart: Chart, p, tol: float = STRUCTURE_TOL) -> np.ndarray:
    L = Local(chart, p)
    L.g
    Jv = L.J.val
    sq, comp = L.structure_residuals()
    if sq[0] > tol or comp[0] > tol:
        raise StructureError(
            f"J is not an orthogonal complex structure: |J^2+Id|={sq[0]:.3g}, "
            f"|J^T g J - g|={comp[0]:.3g}"
        )
    return Jv[0]


def adapted_frame(chart: Chart, dist: Distribution, p) -> AdaptedFrame:
    S = Split(Local(chart, p), dist)
    F = S.frame[0]
    return AdaptedFrame(*(F[:, a] for a in range(DIM)))


def project(chart: Chart, dist: Distribution, p, X, part: str = "delta") -> np.ndarray:
    if part not in ("delta", "E"):
        raise ValueError("part must be 'delta' or 'E'")
    S = Split(Local(chart, p), dist)
    P = (S.P_delta if part == "delta" else S.P_E).val[0]
    return P @ np.asarray(X, dtype=float)
