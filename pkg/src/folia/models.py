"""Built-in scenes: the explicit charts, distributions and potentials the theory
constructs, plus adversarial scenes for falsification."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .expr import Expr, evaluate, parse, render
from .geometry import Chart, Distribution, JSpec
from .jet import DIM

DEFAULT_SAMPLES = 200


@dataclass(frozen=True)
class Constraint:
    expr: Expr
    op: str
    bound: float

    _OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}

    @classmethod
    def parse(cls, text: str, coords, params) -> Constraint:
        m = re.fullmatch(r"(.+?)\s*(<=|>=|<|>)\s*([-+0-9.eE]+)\s*", text)
        if m is None:
            raise ValueError(f"constraint must read '<expr> <op> <number>': {text!r}")
        return cls(parse(m.group(1), coords, params), m.group(2), float(m.group(3)))

    def text(self) -> str:
        return f"{render(self.expr)} {self.op} {self.bound!r}"

    def holds(self, points, params) -> np.ndarray:
        jet, bad = evaluate(self.expr, points, params)
        return ~bad & self._OPS[self.op](jet.val, self.bound)


@dataclass(frozen=True)
class Scene:
    name: str
    chart: Chart
    distribution: Distribution
    box: tuple[tuple[float, float], ...]
    potential: Expr | None = None
    constraints: tuple[Constraint, ...] = ()
    probes: tuple[tuple[float, ...], ...] = ()
    kahler: bool = field(default=True, compare=False)
    tolerances: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.box) != DIM or any(lo >= hi for lo, hi in self.box):
            raise ValueError("region box needs four nonempty intervals")

    def admissible(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, DIM)
        ok = np.ones(len(pts), dtype=bool)
        for c in self.constraints:
            ok &= c.holds(pts, self.chart.params)
        return ok

    def sample(self, n: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
        """Scrambled Halton points in the box that satisfy every constraint."""
        if n <= 0:
            raise ValueError("sample plan must be nonempty")
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        sampler = qmc.Halton(d=DIM, scramble=True, seed=seed)
        out: list[np.ndarray] = []
        have, draws = 0, 0
        while have < n:
            batch = lo + (hi - lo) * sampler.random(max(64, 2 * n))
            keep = batch[self.admissible(batch)]
            out.append(keep)
            have += len(keep)
            draws += 1
            if draws > 200:
                raise ValueError(f"region of scene {self.name!r} is (nearly) empty")
        return np.concatenate(out)[:n]


def _chart(coords, metric, params=None, jspec="standard", components=None) -> Chart:
    return Chart.build(coords, metric, params, jspec, components)


def _dist(chart: Chart, v) -> Distribution:
    return Distribution.from_strings(chart, v)


_C2 = ("x1", "y1", "x2", "y2")
_FLAT = {(i, i): "1" for i in range(DIM)}
_HALF_R2 = "0.5*(x1^2 + y1^2 + x2^2 + y2^2)"
_R2 = "x1^2 + y1^2 + x2^2 + y2^2"


def flat_c2() -> Scene:
    c = _chart(_C2, _FLAT)
    return Scene(
        "flat_c2", c, _dist(c, ["1", "0", "0", "0"]), ((-1.0, 1.0),) * DIM, c.expr(_HALF_R2)
    )


def punctured_c2_radial() -> Scene:
    c = _chart(_C2, _FLAT)
    return Scene(
        "punctured_c2_radial",
        c,
        _dist(c, list(_C2)),
        ((-2.0, 2.0),) * DIM,
        c.expr(_HALF_R2),
        (Constraint.parse(f"{_R2} >= 0.25", _C2, {}), Constraint.parse(f"{_R2} <= 4", _C2, {})),
    )


def _surface(k: float, u: str, v: str):
    """Metric, area form and u-range of a constant-curvature surface patch."""
    if k > 0:
        s = f"sin({u})"
        return {"uu": f"1/{k!r}", "vv": f"{s}^2/{k!r}"}, f"{s}/{k!r}", (0.6, 2.5)
    if k < 0:
        s = f"(exp({u}) - exp(-{u}))/2"
        a = abs(k)
        return {"uu": f"1/{a!r}", "vv": f"({s})^2/{a!r}"}, f"({s})/{a!r}", (0.5, 2.0)
    return {"uu": "1", "vv": "1"}, "1", (-1.0, 1.0)


def product_surfaces(k1: float, k2: float) -> Scene:
    coords = ("u1", "v1", "u2", "v2")
    m1, a1, r1 = _surface(k1, "u1", "v1")
    m2, a2, r2 = _surface(k2, "u2", "v2")
    metric = {(0, 0): m1["uu"], (1, 1): m1["vv"], (2, 2): m2["uu"], (3, 3): m2["vv"]}
    c = _chart(coords, metric, {"k1": float(k1), "k2": float(k2)}, "from-form", {(0, 1): a1, (2, 3): a2})
    return Scene(
        f"product_surfaces({k1!r},{k2!r})",
        c,
        _dist(c, ["1", "0", "0", "0"]),
        (r1, (-1.0, 1.0), r2, (-1.0, 1.0)),
    )


def calabi_type(C: float = 1.0, sigma: str = "flat", twisted: bool = True) -> Scene:
    """``g = z g_S + dz^2/(C z) + C z (dt + alpha)^2`` with ``d alpha = area(S)``.

    ``twisted=False`` drops alpha (the metric is then not Kähler).
    """
    if C == 0:
        raise ValueError("calabi_type needs C != 0")
    if sigma == "flat":
        coords = ("x", "y", "z", "t")
        gS = {(0, 0): "z", (1, 1): "z"}
        area = "z"
        alpha = "x"  # alpha = x dy
        box = ((-1.0, 1.0), (-1.0, 1.0), (0.5, 2.0), (-1.0, 1.0))
    elif sigma == "sphere-patch":
        coords = ("th", "ph", "z", "t")
        gS = {(0, 0): "z", (1, 1): "z*sin(th)^2"}
        area = "z*sin(th)"
        alpha = "(1 - cos(th))"  # alpha = (1 - cos th) dph
        box = ((0.6, 2.5), (-1.0, 1.0), (0.5, 2.0), (-1.0, 1.0))
    else:
        raise ValueError("sigma must be 'flat' or 'sphere-patch'")
    metric = dict(gS)
    metric[(2, 2)] = "1/(C*z)"
    metric[(3, 3)] = "C*z"
    form = {(0, 1): area, (2, 3): "1"}
    if twisted:
        metric[(1, 1)] = f"{metric[(1, 1)]} + C*z*{alpha}^2"
        metric[(1, 3)] = f"C*z*{alpha}"
        form[(1, 2)] = f"-{alpha}"  # dz ^ alpha dy-part: Omega_{y z} = -alpha
    c = _chart(coords, metric, {"C": float(C)}, "from-form", form)
    name = f"calabi_type({C!r},{sigma})" + ("" if twisted else "[untwisted]")
    return Scene(
        name,
        c,
        _dist(c, ["0", "0", "1", "0"]),
        box,
        c.expr("z/C"),
        kahler=twisted,
    )


def skewed_flat(amplitude: float = 1.0) -> Scene:
    """Flat C^2 with Delta spanned by cos(a x2) d_x1 + sin(a x2) d_x2."""
    c = _chart(_C2, _FLAT, {"a": float(amplitude)})
    return Scene(
        f"skewed_flat({amplitude!r})",
        c,
        _dist(c, ["cos(a*x2)", "0", "sin(a*x2)", "0"]),
        ((-1.0, 1.0),) * DIM,
        probes=((0.0, 0.0, 0.0, 1.0), (0.3, -0.2, 0.5, 0.1), (-0.4, 0.6, -0.7, 0.2)),
    )


def perturbed(scene: Scene, amplitude: float, seed: int = 0) -> Scene:
    """Multiply g (and a from-form Kähler form) by 1 + amplitude * Gaussian bump.

    The factor is conformal, so J stays orthogonal; the result is generally
    not Kähler and only suits calculus-level checks.
    """
    rng = np.random.default_rng(seed)
    centre = [rng.uniform(lo, hi) for lo, hi in scene.box]
    names = scene.chart.coords
    dist2 = " + ".join(f"({x} - {c!r})^2" for x, c in zip(names, centre))
    factor = parse(f"1 + {amplitude!r}*exp(-({dist2}))", names, scene.chart.params)
    from .expr import BinOp

    metric = tuple(BinOp("*", factor, e) for e in scene.chart.metric)
    spec = scene.chart.jspec
    if spec.kind == "from-form":
        spec = JSpec(spec.kind, tuple(BinOp("*", factor, e) for e in spec.components))
    chart = replace(scene.chart, metric=metric, jspec=spec)
    return replace(scene, name=f"perturbed({scene.name},{amplitude!r},{seed})", chart=chart, kahler=False)


BUILTINS = {
    "flat_c2": flat_c2,
    "punctured_c2_radial": punctured_c2_radial,
    "product_surfaces": product_surfaces,
    "calabi_type": calabi_type,
    "skewed_flat": skewed_flat,
}


def builtin(spec: str) -> Scene:
    """Resolve ``NAME`` or ``NAME(arg, ...)``, e.g. ``calabi_type(1, sphere-patch)``."""
    m = re.fullmatch(r"\s*(\w+)\s*(?:\((.*)\))?\s*", spec)
    if m is None or m.group(1) not in BUILTINS:
        raise KeyError(f"unknown builtin scene {spec!r}; known: {sorted(BUILTINS)}")
    args = []
    if m.group(2):
        for tok in m.group(2).split(","):
            tok = tok.strip()
            try:
                args.append(float(tok))
            except ValueError:
                args.append(tok)
    return BUILTINS[m.group(1)](*args)


def zoo() -> list[Scene]:
    """The scenes every equivalence audit is run across."""
    return [
        flat_c2(),
        punctured_c2_radial(),
        product_surfaces(1.0, 0.0),
        product_surfaces(1.0, -1.0),
        calabi_type(0.5),
        calabi_type(1.0),
        calabi_type(2.0),
        calabi_type(1.0, "sphere-patch"),
        skewed_flat(0.5),
        skewed_flat(1.0),
    ]
