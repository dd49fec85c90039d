"""Batched second-order jets of tensor fields.

A :class:`Jet` holds the value of a tensor field at ``N`` points together with
its first and (optionally) second coordinate partials.  Array layout is always::

    val : (N, *shape)
    d1  : (N, *shape, 4)        d1[..., i]    = d/dx^i
    d2  : (N, *shape, 4, 4)     d2[..., i, j] = d^2/dx^i dx^j

Every operation propagates derivatives exactly (product, chain and quotient
rules) and truncates to the lowest order among its operands.  Taking a
coordinate partial lowers the order by one, so a metric evaluated to order 2
yields Christoffel symbols of order 1 and curvature of order 0.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

DIM = 4


class JetOrderError(ValueError):
    """Raised when a derivative is requested beyond the order a jet carries."""


class Jet:
    __slots__ = ("val", "d1", "d2")

    def __init__(self, val, d1=None, d2=None):
        self.val = np.asarray(val, dtype=float)
        self.d1 = None if d1 is None else np.asarray(d1, dtype=float)
        self.d2 = None if d2 is None or d1 is None else np.asarray(d2, dtype=float)

    @classmethod
    def const(cls, val, order: int = 2) -> Jet:
        val = np.asarray(val, dtype=float)
        d1 = np.zeros(val.shape + (DIM,)) if order >= 1 else None
        d2 = np.zeros(val.shape + (DIM, DIM)) if order >= 2 else None
        return cls(val, d1, d2)

    @property
    def order(self) -> int:
        if self.d1 is None:
            return 0
        return 1 if self.d2 is None else 2

    @property
    def n(self) -> int:
        return self.val.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.val.shape[1:]

    def truncate(self, order: int) -> Jet:
        if order >= self.order:
            return self
        return Jet(self.val, self.d1 if order >= 1 else None, None)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, n={self.n}, order={self.order})"

    # -- linear structure -------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.d1, self.d2)
        k = min(self.order, other.order)
        a, b = self.truncate(k), other.truncate(k)
        return Jet(
            a.val + b.val,
            None if k < 1 else a.d1 + b.d1,
            None if k < 2 else a.d2 + b.d2,
        )

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(
            -self.val,
            None if self.d1 is None else -self.d1,
            None if self.d2 is None else -self.d2,
        )

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return mul(self, other)
        s = float(other)
        return Jet(
            s * self.val,
            None if self.d1 is None else s * self.d1,
            None if self.d2 is None else s * self.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return mul(self, reciprocal(other))
        return self * (1.0 / float(other))

    # -- structural ---------------------------------------------------------
    def __getitem__(self, idx) -> Jet:
        if not isinstance(idx, tuple):
            idx = (idx,)
        key = (slice(None),) + idx
        return Jet(
            self.val[key],
            None if self.d1 is None else self.d1[key],
            None if self.d2 is None else self.d2[key],
        )

    def transpose(self, *axes: int) -> Jet:
        """Permute tensor axes (batch and derivative axes stay put)."""
        r = len(self.shape)
        perm = (0,) + tuple(a + 1 for a in axes)
        p1 = perm + (r + 1,)
        p2 = perm + (r + 1, r + 2)
        return Jet(
            self.val.transpose(perm),
            None if self.d1 is None else self.d1.transpose(p1),
            None if self.d2 is None else self.d2.transpose(p2),
        )

    @property
    def T(self) -> Jet:
        return self.transpose(*reversed(range(len(self.shape))))

    def moveaxis(self, src: int, dst: int) -> Jet:
        axes = list(range(len(self.shape)))
        axes.insert(dst, axes.pop(src))
        return self.transpose(*axes)

    def partial(self) -> Jet:
        """Coordinate gradient; the new derivative index is appended last."""
        if self.d1 is None:
            raise JetOrderError("jet carries no derivatives")
        return Jet(self.d1, self.d2, None)

    def take(self, rows) -> Jet:
        """Restrict to a subset of the batch."""
        return Jet(
            self.val[rows],
            None if self.d1 is None else self.d1[rows],
            None if self.d2 is None else self.d2[rows],
        )


def stack(jets, axis: int = 0) -> Jet:
    k = min(j.order for j in jets)
    jets = [j.truncate(k) for j in jets]
    ax = axis + 1
    return Jet(
        np.stack([j.val for j in jets], axis=ax),
        None if k < 1 else np.stack([j.d1 for j in jets], axis=ax),
        None if k < 2 else np.stack([j.d2 for j in jets], axis=ax),
    )


def _sym(a):
    return a + np.swapaxes(a, -1, -2)


def einsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Bilinear contraction of two jets, e.g. ``einsum("ij,j->i", A, x)``.

    The spec names tensor indices only; batch and derivative axes are added.
    """
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    k = min(a.order, b.order)
    val = np.einsum(f"...{sa},...{sb}->...{out}", a.val, b.val)
    if k < 1:
        return Jet(val)
    d1 = np.einsum(f"...{sa}P,...{sb}->...{out}P", a.d1, b.val) + np.einsum(
        f"...{sa},...{sb}P->...{out}P", a.val, b.d1
    )
    if k < 2:
        return Jet(val, d1)
    d2 = (
        np.einsum(f"...{sa}PQ,...{sb}->...{out}PQ", a.d2, b.val)
        + _sym(np.einsum(f"...{sa}P,...{sb}Q->...{out}PQ", a.d1, b.d1))
        + np.einsum(f"...{sa},...{sb}PQ->...{out}PQ", a.val, b.d2)
    )
    return Jet(val, d1, d2)


def einsum3(spec: str, a: Jet, b: Jet, c: Jet) -> Jet:
    ins, out = spec.split("->")
    sa, sb, sc = ins.split(",")
    mid = "".join(dict.fromkeys(ch for ch in sa + sb if ch in out or ch in sc))
    return einsum(f"{mid},{sc}->{out}", einsum(f"{sa},{sb}->{mid}", a, b), c)


def mul(a: Jet, b: Jet) -> Jet:
    """Elementwise product of equal-shape jets (scalar jets broadcast)."""
    if a.shape == b.shape:
        idx = "ijklmn"[: len(a.shape)]
        return einsum(f"{idx},{idx}->{idx}", a, b)
    if a.shape == ():
        idx = "ijklmn"[: len(b.shape)]
        return einsum(f",{idx}->{idx}", a, b)
    if b.shape == ():
        idx = "ijklmn"[: len(a.shape)]
        return einsum(f"{idx},->{idx}", a, b)
    raise ValueError(f"incompatible jet shapes {a.shape} and {b.shape}")


def jmap(u: Jet, f0, f1, f2) -> Jet:
    """Apply an elementwise function given its value and first two derivatives."""
    val = f0
    if u.order < 1:
        return Jet(val)
    d1 = f1[..., None] * u.d1
    if u.order < 2:
        return Jet(val, d1)
    d2 = f2[..., None, None] * (u.d1[..., :, None] * u.d1[..., None, :]) + f1[
        ..., None, None
    ] * u.d2
    return Jet(val, d1, d2)


def reciprocal(u: Jet) -> Jet:
    r = 1.0 / u.val
    return jmap(u, r, -r * r, 2.0 * r * r * r)


def sqrt(u: Jet) -> Jet:
    s = np.sqrt(u.val)
    return jmap(u, s, 0.5 / s, -0.25 / (s * u.val))


def solve(a: Jet, b: Jet) -> Jet:
    """Solve ``a x = b`` over the jet ring.

    ``a`` has shape (m, m); ``b`` has shape (m,) or (m, k).  The value uses
    one LU solve per point; derivative orders reuse the same system with the
    right-hand sides ``b' - a' x`` and ``b'' - a'' x - 2 sym(a' x')``.
    """
    k = min(a.order, b.order)
    vec = b.val.ndim == 2
    A = a.val

    def _solve(rhs):
        return np.linalg.solve(A, rhs)

    bv = b.val[..., None] if vec else b.val
    x = _solve(bv)
    val = x[..., 0] if vec else x
    if k < 1:
        return Jet(val)
    # a'_P x, shape (N, m, [k,] P)
    if vec:
        ax1 = np.einsum("nijP,nj->niP", a.d1, val)
        rhs1 = b.d1 - ax1
    else:
        ax1 = np.einsum("nijP,njc->nicP", a.d1, val)
        rhs1 = b.d1 - ax1
    n, m = A.shape[0], A.shape[1]
    flat = rhs1.reshape(n, m, -1)
    x1 = _solve(flat).reshape(rhs1.shape)
    if k < 2:
        return Jet(val, x1)
    if vec:
        t = np.einsum("nijPQ,nj->niPQ", a.d2, val) + _sym(
            np.einsum("nijP,njQ->niPQ", a.d1, x1)
        )
    else:
        t = np.einsum("nijPQ,njc->nicPQ", a.d2, val) + _sym(
            np.einsum("nijP,njcQ->nicPQ", a.d1, x1)
        )
    rhs2 = b.d2 - t
    x2 = _solve(rhs2.reshape(n, m, -1)).reshape(rhs2.shape)
    x2 = 0.5 * _sym(x2)
    return Jet(val, x1, x2)


def inv(a: Jet) -> Jet:
    m = a.shape[0]
    eye = Jet.const(np.broadcast_to(np.eye(m), (a.n, m, m)), a.order)
    return solve(a, eye)


# -- exterior algebra on fully antisymmetric component arrays ----------------


def alt(t: Jet) -> Jet:
    """Antisymmetrize all tensor axes (no 1/k! normalization)."""
    r = len(t.shape)
    out = None
    for perm in permutations(range(r)):
        sign = _perm_sign(perm)
        term = t.transpose(*perm) * float(sign)
        out = term if out is None else out + term
    return out


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


_LETTERS = "abcdefgh"


def wedge(a: Jet, b: Jet) -> Jet:
    """Wedge product of a p-form and a q-form, ``(a^b)(X..) = sum_shuffles``.

    Forms are stored as antisymmetric arrays with ``beta(d_i, d_j) = beta[i, j]``.
    """
    p, q = len(a.shape), len(b.shape)
    sa, sb = _LETTERS[:p], _LETTERS[p : p + q]
    if p == 0 or q == 0:
        return mul(a, b)
    prod = einsum(f"{sa},{sb}->{sa}{sb}", a, b)
    from math import factorial

    return alt(prod) * (1.0 / (factorial(p) * factorial(q)))


def exterior_derivative(beta: Jet) -> Jet:
    """``(d beta)_{i0..ik} = sum_s (-1)^s d_{i_s} beta_{i0..^i_s..ik}``."""
    k = len(beta.shape)
    e = beta.partial().moveaxis(k, 0)  # e[i, j1..jk] = d_i beta_{j1..jk}
    out = None
    for s in range(k + 1):
        term = e.moveaxis(0, s) * float((-1) ** s)
        out = term if out is None else out + term
    return out


def reindex(spec: str, a: Jet) -> Jet:
    """Unary einsum over tensor axes, e.g. ``reindex("jli->lij", t)`` or traces."""
    ins, out = spec.split("->")
    return Jet(
        np.einsum(f"...{ins}->...{out}", a.val),
        None if a.d1 is None else np.einsum(f"...{ins}P->...{out}P", a.d1),
        None if a.d2 is None else np.einsum(f"...{ins}PQ->...{out}PQ", a.d2),
    )
