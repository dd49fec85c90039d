"""Scene files, suite orchestration and machine-readable reports.

``folia run --scene <path | builtin:NAME(args)> --suites kahler,foliation ...``

Exit codes: 0 consistent, 1 counterexample found, 2 configuration or scene
error (including a non-Kähler scene given to a theorem suite), 3 numerical
failure (singular metric in the region or more than 10% of samples skipped).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import tomli
import tomli_w

from . import __version__
from .calculus import metric_compatibility, riemann_symmetry_residuals
from .expr import ExprError, UnknownIdentifierError, render
from .foliation import (
    AUDITS,
    IDENTITY_AUDITS,
    TOL_ALGEBRAIC,
    TOL_DERIVED,
    Audit,
    Foliation,
    Prepared,
    prepare,
    run_audit,
    tolerance_for,
)
from .geometry import FORM_PAIRS, PAIRS, Chart, Distribution, GeometryError, JSpec, Local, Split
from .hermitian import kahler_residual, nijenhuis_norm
from .jet import DIM
from .models import Constraint, Scene, builtin
from . import qch

SUITES = ("calculus", "kahler", "foliation", "qch", "theorem9")
THEOREM_SUITES = ("kahler", "foliation", "qch", "theorem9")
CHUNK = 25
SKIP_LIMIT = 0.10

EXIT_OK, EXIT_COUNTEREXAMPLE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class SceneError(ValueError):
    """A scene file problem, with the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, kind: str = "invalid"):
        self.key, self.line, self.kind = key, line, kind
        where = ""
        if key is not None:
            where += f" [{key}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{kind}{where}: {message}")


# -- scene files ----------------------------------------------------------------

_TOP = {"scene", "chart", "distribution", "potential", "region", "tolerances"}
_ALLOWED = {
    "scene": {"name", "probes"},
    "chart": {"coords", "params", "jspec"},
    "jspec": {"kind"},
    "distribution": {"v", "gradient_of"},
    "potential": {"phi"},
    "region": {"box", "require"},
    "tolerances": {"algebraic", "derived"},
}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(rf"^\s*{re.escape(key)}\s*=", text, re.M)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _split_pair(key: str, prefix: str, coords) -> tuple[int, int] | None:
    """Resolve ``g_<a><b>`` or ``g_<a>_<b>`` against the coordinate names."""
    body = key[len(prefix):]
    idx = {c: i for i, c in enumerate(coords)}
    if "_" in body:
        a, _, b = body.partition("_")
        if a in idx and b in idx:
            return idx[a], idx[b]
    hits = [(idx[body[:k]], idx[body[k:]]) for k in range(1, len(body)) if body[:k] in idx and body[k:] in idx]
    if len(hits) == 1:
        return hits[0]
    return None


def _pair_key(prefix: str, coords, i: int, j: int) -> str:
    key = f"{prefix}{coords[i]}{coords[j]}"
    if _split_pair(key, prefix, coords) == (i, j):
        return key
    return f"{prefix}{coords[i]}_{coords[j]}"


def _expr(chart_coords, params, text, key, src):
    try:
        from .expr import parse

        return parse(text, chart_coords, params)
    except UnknownIdentifierError as err:
        raise SceneError(f"{err} (bind it under [chart] params)", key, _line_of(src, key), "unbound-parameter") from err
    except ExprError as err:
        raise SceneError(str(err), key, _line_of(src, key), "expression") from err


def parse_scene(src: str, name: str = "scene") -> Scene:
    """Validate a TOML scene document."""
    try:
        doc = tomli.loads(src)
    except tomli.TOMLDecodeError as err:
        msg = str(err)
        m = re.search(r"line (\d+)", msg)
        kind = "duplicate-key" if "overwrite" in msg.lower() or "duplicate" in msg.lower() else "parse"
        raise SceneError(msg, None, int(m.group(1)) if m else None, kind) from err

    for k in doc:
        if k not in _TOP:
            raise SceneError("unknown section", k, _line_of(src, k) or _line_of(src, f"[{k}"), "unknown-key")
    chart_doc = doc.get("chart")
    if not isinstance(chart_doc, dict):
        raise SceneError("missing [chart]", "chart")
    coords = chart_doc.get("coords")
    if not isinstance(coords, list) or len(coords) != DIM:
        raise SceneError("coords must list four names", "chart.coords", _line_of(src, "coords"))
    params = chart_doc.get("params", {})
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) for v in params.values()):
        raise SceneError("params must map names to numbers", "chart.params", _line_of(src, "params"))
    params = {k: float(v) for k, v in params.items()}

    metric: dict[tuple[int, int], str] = {}
    for k, v in chart_doc.items():
        if k in _ALLOWED["chart"]:
            continue
        pair = _split_pair(k, "g_", coords) if k.startswith("g_") else None
        if pair is None:
            raise SceneError("unknown key", f"chart.{k}", _line_of(src, k), "unknown-key")
        ij = (min(pair), max(pair))
        if ij in metric:
            raise SceneError("metric component defined twice", f"chart.{k}", _line_of(src, k), "duplicate-key")
        metric[ij] = v
    g = tuple(_expr(coords, params, str(metric.get(ij, "0")), _pair_key("g_", coords, *ij), src) for ij in PAIRS)

    js = chart_doc.get("jspec", {"kind": "standard"})
    kind = js.get("kind", "standard")
    comps: tuple = ()
    if kind == "from-form":
        form: dict[tuple[int, int], str] = {}
        for k, v in js.items():
            if k == "kind":
                continue
            pair = _split_pair(k, "w_", coords) if k.startswith("w_") else None
            if pair is None or pair[0] == pair[1]:
                raise SceneError("unknown key", f"chart.jspec.{k}", _line_of(src, k), "unknown-key")
            i, j = pair
            text = str(v) if i < j else f"-({v})"
            if (min(i, j), max(i, j)) in form:
                raise SceneError("form component defined twice", f"chart.jspec.{k}", _line_of(src, k), "duplicate-key")
            form[(min(i, j), max(i, j))] = text
        comps = tuple(_expr(coords, params, form.get(ij, "0"), "jspec", src) for ij in FORM_PAIRS)
    elif kind == "explicit":
        entries = {}
        for k, v in js.items():
            if k == "kind":
                continue
            pair = _split_pair(k, "J_", coords) if k.startswith("J_") else None
            if pair is None:
                raise SceneError("unknown key", f"chart.jspec.{k}", _line_of(src, k), "unknown-key")
            entries[pair] = v
        comps = tuple(_expr(coords, params, str(entries.get((i, j), "0")), "jspec", src)
                      for i in range(DIM) for j in range(DIM))
    elif kind == "standard":
        extra = set(js) - {"kind"}
        if extra:
            raise SceneError("standard J takes no components", f"chart.jspec.{sorted(extra)[0]}", None, "unknown-key")
    else:
        raise SceneError(f"unknown jspec kind {kind!r}", "chart.jspec.kind", _line_of(src, "kind"))
    try:
        chart = Chart(tuple(coords), g, JSpec(kind, comps), params)
    except ValueError as err:
        raise SceneError(str(err), "chart") from err

    for sec in ("scene", "distribution", "potential", "region", "tolerances"):
        for k in doc.get(sec, {}):
            if k not in _ALLOWED[sec]:
                raise SceneError("unknown key", f"{sec}.{k}", _line_of(src, k), "unknown-key")

    dist_doc = doc.get("distribution", {})
    if ("v" in dist_doc) == ("gradient_of" in dist_doc):
        raise SceneError("give exactly one of v or gradient_of", "distribution")
    if "v" in dist_doc:
        v = dist_doc["v"]
        if not isinstance(v, list) or len(v) != DIM:
            raise SceneError("v needs four component expressions", "distribution.v", _line_of(src, "v"))
        dist = Distribution(v=tuple(_expr(coords, params, str(s), "v", src) for s in v))
    else:
        dist = Distribution(gradient_of=_expr(coords, params, dist_doc["gradient_of"], "gradient_of", src))

    phi = None
    if "potential" in doc:
        phi = _expr(coords, params, doc["potential"].get("phi", ""), "phi", src)

    reg = doc.get("region", {})
    box = reg.get("box")
    if not isinstance(box, list) or len(box) != DIM or not all(isinstance(b, list) and len(b) == 2 for b in box):
        raise SceneError("box must list four [lo, hi] intervals", "region.box", _line_of(src, "box"))
    box_t = tuple((float(a), float(b)) for a, b in box)
    cons = []
    for text in reg.get("require", []):
        try:
            cons.append(Constraint.parse(text, coords, params))
        except (ValueError, ExprError) as err:
            raise SceneError(str(err), "region.require", _line_of(src, "require"), "expression") from err

    meta = doc.get("scene", {})
    tol = doc.get("tolerances", {})
    try:
        scene = Scene(
            meta.get("name", name), chart, dist, box_t, phi, tuple(cons),
            tuple(tuple(float(x) for x in p) for p in meta.get("probes", [])),
            tolerances={k: float(v) for k, v in tol.items()},
        )
    except ValueError as err:
        raise SceneError(str(err), "region") from err
    try:
        scene.sample(8, 0)
    except ValueError as err:
        raise SceneError(str(err), "region", None, "empty-region") from err
    return scene


def load_scene(path: str) -> Scene:
    if path.startswith("builtin:"):
        try:
            return builtin(path[len("builtin:"):])
        except (KeyError, TypeError, ValueError) as err:
            raise SceneError(str(err), "scene", None, "unknown-builtin") from err
    try:
        with open(path, encoding="utf-8") as fh:
            src = fh.read()
    except OSError as err:
        raise SceneError(str(err), None, None, "unreadable") from err
    return parse_scene(src, os.path.splitext(os.path.basename(path))[0])


def dump_scene(scene: Scene) -> str:
    """Canonical TOML text of a scene (accepted back by :func:`parse_scene`)."""
    c = scene.chart
    chart: dict = {"coords": list(c.coords)}
    if c.params:
        chart["params"] = dict(sorted(c.params.items()))
    for (i, j), e in zip(PAIRS, c.metric):
        text = render(e)
        if text != "0.0":
            chart[_pair_key("g_", c.coords, i, j)] = text
    js: dict = {"kind": c.jspec.kind}
    if c.jspec.kind == "from-form":
        for (i, j), e in zip(FORM_PAIRS, c.jspec.components):
            if render(e) != "0.0":
                js[_pair_key("w_", c.coords, i, j)] = render(e)
    elif c.jspec.kind == "explicit":
        for k, e in enumerate(c.jspec.components):
            if render(e) != "0.0":
                js[_pair_key("J_", c.coords, k // DIM, k % DIM)] = render(e)
    chart["jspec"] = js
    doc: dict = {"scene": {"name": scene.name}, "chart": chart}
    if scene.probes:
        doc["scene"]["probes"] = [list(p) for p in scene.probes]
    d = scene.distribution
    doc["distribution"] = {"v": [render(e) for e in d.v]} if d.v is not None else {"gradient_of": render(d.gradient_of)}
    if scene.potential is not None:
        doc["potential"] = {"phi": render(scene.potential)}
    doc["region"] = {"box": [list(b) for b in scene.box]}
    if scene.constraints:
        doc["region"]["require"] = [k.text() for k in scene.constraints]
    if scene.tolerances:
        doc["tolerances"] = dict(sorted(scene.tolerances.items()))
    return tomli_w.dumps(doc)


def scene_digest(scene: Scene) -> str:
    return hashlib.sha256(dump_scene(scene).encode()).hexdigest()


# -- running --------------------------------------------------------------------


@dataclass
class Options:
    suites: tuple[str, ...] | None = None  # None: every suite the scene supports
    samples: int = 200
    seed: int = 42
    tol_algebraic: float = TOL_ALGEBRAIC
    tol_derived: float = TOL_DERIVED
    g2_variant: str = "symmetric"
    h_convention: str = "E"
    threads: int | None = None


@dataclass
class Report:
    data: dict
    rows: list[tuple] = field(default_factory=list)  # (point, check_id, residual)

    @property
    def exit_code(self) -> int:
        return self.data["exit_code"]


ANCHORS = {
    "riemann_symmetries": "algebraic symmetries and first Bianchi identity of R",
    "metric_compatibility": "nabla g = 0",
    "J_structure": "J^2 = -Id and g(J., J.) = g",
    "nabla_J": "Kähler: nabla J = 0",
    "d_Omega_J": "Kähler: d Omega_J = 0",
    "nijenhuis_J": "J integrable",
    "frobenius": "Delta integrable (bracket of v and Jv stays in Delta)",
    "frobenius_E": "E integrable",
    "theorem1": "d omega_2 = phi ^ omega_2 solvable",
    "totally_geodesic": "Delta totally geodesic",
    "holomorphic": "Delta holomorphic: L_xi J maps TM into Delta",
    "quasi_holomorphic": "Delta quasi-holomorphic: L_xi J maps E into Delta",
    "conformal": "Delta conformal: L_xi g proportional to g on E",
    "alpha_theta": "conformal factor alpha(xi) equals theta(xi)",
    "star_identity": "2g(nabla_X xi, Y) = theta(xi) g(X,Y) + J theta(xi) omega(X,Y)",
    "corollary1": "antisymmetric part of nabla xi on E and [X,Y]_Delta = -J theta^# omega(X,Y)",
    "corollary1_opposite": "same identities with the opposite sign of J theta (convention audit)",
    "ker_nabla_I": "Delta inside ker nabla I",
    "almost_kahler": "I almost Kähler: d Omega_I = 0",
    "nijenhuis_I": "I integrable",
    "d_alpha": "d alpha = 0",
    "homothetic": "Delta homothetic: conformal with d alpha = 0",
    "lemma": "(nabla_X omega_2)(Y,Z) = 0 for X in Delta, Y, Z in E",
    "dtheta_delta": "d theta vanishes on Delta",
    "dtheta_E": "d theta vanishes on E",
    "theta_E": "theta^# lies in Delta",
    "lee": "d omega_2 = theta ^ omega_2",
    "qch_fit": "R = a Pi + b Phi + c Psi",
    "qch_sampling": "K(X) depends only on the point and |X_Delta|",
    "semi_symmetry": "R.R = 0",
    "gray_g2": "second Gray condition for I",
    "gray_g2_symmetric": "second Gray condition, last argument IW",
    "gray_g2_printed": "second Gray condition, printed last argument JW",
    "theorem8_curvature": "g(R(Z,X) xi, Y) = 0 for xi in Delta, X, Y, Z in E",
    "dtheta_J_anti_invariance": "d theta(JX, JY) = -d theta(X, Y)",
    "dtheta_asd_I": "anti-self-dual part of d theta, I-orientation",
}
for _k in qch.SEMISYM_IDENTITIES:
    ANCHORS[_k] = "semi-symmetric block identity: " + _k.replace("_", " ")

QCH_AUDITS = (
    Audit("qch_g2", "QCH curvature => I satisfies the second Gray condition", "implies",
          (("qch_sampling",), ("gray_g2",))),
    Audit("thm8", "totally geodesic holomorphic foliation => conformal and curvature identity", "implies",
          (("totally_geodesic", "holomorphic"), ("conformal", "theorem8_curvature")), ("frobenius",)),
)


def _audit(a: Audit, res, prep, opts) -> dict:
    r = run_audit(a, res, prep.points, prep.index, opts.tol_algebraic, opts.tol_derived)
    return {"id": r.id, "anchor": r.anchor, "kind": r.kind, "tol": r.tol, "counts": r.counts,
            "counterexamples": r.counterexamples}


def _chunk_metrics(scene: Scene, pts: np.ndarray, opts: Options) -> dict[str, np.ndarray]:
    """Every per-point quantity the requested suites need, on one chunk."""
    out: dict[str, np.ndarray] = {}
    want = set(opts.suites)
    L = Local(scene.chart, pts)
    if "calculus" in want:
        sym = riemann_symmetry_residuals(L.riemann)
        out["riemann_symmetries"] = np.max(list(sym.values()), axis=0)
        out["metric_compatibility"] = metric_compatibility(L)
        sq, comp = L.structure_residuals()
        out["J_structure"] = np.maximum(sq, comp)
    if want & set(THEOREM_SUITES):
        nJ, dO = kahler_residual(L)
        out["nabla_J"], out["d_Omega_J"] = nJ, dO
        out["nijenhuis_J"] = nijenhuis_norm(L, L.J)
    if want & {"foliation", "qch"}:
        S = Split(L, scene.distribution)
        F = Foliation(S)
        res = F.residuals()
        out.update(res)
        out["alpha_e1"], out["alpha_e2"] = F.alpha[:, 0], F.alpha[:, 1]
        out["theta_e1"], out["theta_e2"] = F.theta_frame[:, 0], F.theta_frame[:, 1]
        signs = F.herm.lee_sign_residuals()
        out["lee_plus_2"], out["lee_minus_2"] = signs["plus_2"], signs["minus_2"]
    if "qch" in want:
        fit = qch.fit_decomposition(S, opts.h_convention)
        out["qch_fit"] = fit.residual
        out["fit_a"], out["fit_b"], out["fit_c"] = fit.a, fit.b, fit.c
        out["qch_sampling"] = qch.qch_sampling(S)
        out["semi_symmetry"] = qch.semi_symmetry(L)
        sym = qch.gray_g2(S, "symmetric")
        prn = qch.gray_g2(S, "printed")
        out["gray_g2"] = prn if opts.g2_variant == "printed" else sym
        out["gray_g2_symmetric"], out["gray_g2_printed"] = sym, prn
        t8 = qch.theorem8(S)
        out["theorem8_curvature"] = t8["curvature"]
        out["dtheta_J_anti_invariance"] = t8["dtheta_J_anti_invariance"]
        out["dtheta_asd_I"] = t8["dtheta_asd_I"]
        ssi, _ = qch.semisym_identities(S)
        out.update(ssi)
    return out


def _theorem9_chunk(scene: Scene, pts: np.ndarray, opts: Options) -> dict[str, np.ndarray]:
    return qch.theorem9_point_metrics(scene.chart, scene.potential, pts, opts.h_convention)


def _map_chunks(fn, scene, pts, opts) -> dict[str, np.ndarray]:
    """Evaluate ``fn`` on fixed-size chunks, in order; the worker count only
    changes scheduling, never the arithmetic."""
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    workers = opts.threads or int(os.environ.get("FOLIA_THREADS", "1") or 1)
    workers = max(1, min(workers, len(chunks)))
    if workers == 1:
        parts = [fn(scene, c, opts) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: fn(scene, c, opts), chunks))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _stats(v: np.ndarray) -> dict:
    return {"max": float(v.max()), "mean": float(v.mean())}


def _check(cid: str, suite: str, v: np.ndarray, tol: float) -> dict:
    return {"id": cid, "suite": suite, "anchor": ANCHORS.get(cid, cid), "tol": tol,
            "verdict": "pass" if float(v.max()) < tol else "fail", **_stats(v)}


def _skip_block(prep: Prepared) -> dict:
    return {"count": len(prep.skipped), "fraction": prep.skipped_fraction,
            "reasons": {str(k): v for k, v in prep.skipped.items()}}


def run(scene: Scene, opts: Options | None = None) -> Report:
    """Run the requested suites on a shared sample plan."""
    opts = opts or Options()
    if opts.suites is None:
        auto = SUITES if scene.potential is not None else SUITES[:-1]
        opts = Options(**{**opts.__dict__, "suites": auto})
    for s in opts.suites:
        if s not in SUITES:
            raise SceneError(f"unknown suite {s!r}", "suites", None, "config")
    tols = {"algebraic": scene.tolerances.get("algebraic", opts.tol_algebraic),
            "derived": scene.tolerances.get("derived", opts.tol_derived)}
    opts = Options(**{**opts.__dict__, "tol_algebraic": tols["algebraic"], "tol_derived": tols["derived"]})
    data: dict = {
        "engine": {"name": "folia", "version": __version__},
        "scene": {"name": scene.name, "digest": scene_digest(scene)},
        "seed": opts.seed, "samples": opts.samples, "suites": list(opts.suites),
        "tolerances": tols,
        "conventions": {"lee": "d Omega_I = +2 theta ^ Omega_I (d omega_2 = theta ^ omega_2)",
                        "J_theta": "(J theta)(X) = -theta(JX)",
                        "h_convention": opts.h_convention, "g2_variant": opts.g2_variant},
        "checks": [], "audits": [], "errors": [],
    }
    rows: list[tuple] = []
    report = Report(data, rows)

    def finish(code: int, status: str) -> Report:
        data["exit_code"], data["status"] = code, status
        return report

    plan = scene.sample(opts.samples, opts.seed)
    need_dist = bool(set(opts.suites) & {"foliation", "qch"})
    try:
        prep = prepare(scene.chart, scene.distribution if need_dist else None, plan)
    except GeometryError as err:
        data["errors"].append(str(err))
        return finish(EXIT_NUMERICAL, "numerical failure")
    data["skipped"] = _skip_block(prep)
    singular = [k for k, v in prep.skipped.items() if v.startswith("singular metric")]
    if singular or prep.skipped_fraction > SKIP_LIMIT or len(prep.points) == 0:
        data["errors"].append("singular metric inside the region" if singular else "too many skipped samples")
        return finish(EXIT_NUMERICAL, "numerical failure")

    t_alg, t_der = opts.tol_algebraic, opts.tol_derived
    main = [s for s in opts.suites if s != "theorem9"]
    if "theorem9" in opts.suites and "kahler" not in main:
        main.append("kahler")
    try:
        main_opts = Options(**{**opts.__dict__, "suites": tuple(main)})
        m = _map_chunks(_chunk_metrics, scene, prep.points, main_opts) if main else {}
    except GeometryError as err:
        data["errors"].append(str(err))
        return finish(EXIT_NUMERICAL, "numerical failure")

    def emit_rows(names):
        for k in range(len(prep.points)):
            for n in names:
                rows.append((prep.points[k], n, float(m[n][k])))

    code = EXIT_OK
    if "calculus" in opts.suites:
        names = ["riemann_symmetries", "metric_compatibility", "J_structure"]
        data["checks"] += [_check(n, "calculus", m[n], t_alg) for n in names]
        emit_rows(names)
        if m["J_structure"].max() > t_alg:
            data["errors"].append("J is not an orthogonal complex structure")
            return finish(EXIT_CONFIG, "scene error")
        if max(m[n].max() for n in names) > t_alg:
            return finish(EXIT_NUMERICAL, "numerical failure")

    if set(opts.suites) & set(THEOREM_SUITES):
        names = ["nabla_J", "d_Omega_J", "nijenhuis_J"]
        data["checks"] += [_check(n, "kahler", m[n], t_alg) for n in names]
        emit_rows(names)
        if max(m[n].max() for n in names) > t_alg:
            data["errors"].append("scene rejected: metric and J are not Kähler on the region")
            return finish(EXIT_CONFIG, "scene rejected (not Kähler)")

    if "foliation" in opts.suites or "qch" in opts.suites:
        names = list(Foliation.PREDICATES)
        data["checks"] += [_check(n, "foliation", m[n], tolerance_for(n, t_alg, t_der)) for n in names]
        emit_rows(names)
        data["foliation"] = {
            "alpha": {"e1": _stats(m["alpha_e1"]), "e2": _stats(m["alpha_e2"])},
            "theta": {"e1": _stats(m["theta_e1"]), "e2": _stats(m["theta_e2"])},
            "alpha_over_theta": _ratio(m),
        }
        data["conventions"]["lee_sign_fit"] = {"plus_2": float(m["lee_plus_2"].max()),
                                               "minus_2": float(m["lee_minus_2"].max())}
        c1, c1o = float(m["corollary1"].max()), float(m["corollary1_opposite"].max())
        data["conventions"]["corollary1_sign"] = "canonical" if c1 <= c1o else "opposite fits better"
        for a in AUDITS + IDENTITY_AUDITS:
            data["audits"].append(_audit(a, m, prep, opts))

    if "qch" in opts.suites:
        names = ["qch_fit", "qch_sampling", "semi_symmetry", "gray_g2", "gray_g2_symmetric", "gray_g2_printed",
                 "theorem8_curvature", "dtheta_J_anti_invariance", "dtheta_asd_I", *qch.SEMISYM_IDENTITIES]
        tol_q = {"qch_fit": t_der, "semi_symmetry": t_der}
        data["checks"] += [_check(n, "qch", m[n], tol_q.get(n, t_der if n in qch.SEMISYM_IDENTITIES else t_alg))
                           for n in names]
        emit_rows(names)
        data["qch"] = {"a": _stats(np.abs(m["fit_a"])), "b": _stats(np.abs(m["fit_b"])),
                       "c_mean": float(m["fit_c"].mean()), "h_convention": opts.h_convention}
        for a in QCH_AUDITS:
            data["audits"].append(_audit(a, m, prep, opts))

    if "theorem9" in opts.suites:
        if scene.potential is None:
            data["errors"].append("theorem9 needs a [potential] phi")
            return finish(EXIT_CONFIG, "scene error")
        d9 = Distribution(gradient_of=scene.potential)
        prep9 = prepare(scene.chart, d9, plan, extra=[scene.potential])
        if len(prep9.points) == 0:
            data["errors"].append("no admissible samples for theorem9")
            return finish(EXIT_NUMERICAL, "numerical failure")
        m9 = _map_chunks(_theorem9_chunk, scene, prep9.points, opts)
        t9 = qch.theorem9_stages(m9, prep9, t_alg, t_der, opts.h_convention)
        data["theorem9"] = {
            "stages": [{"name": s.name, "anchor": s.anchor, "residual": s.residual, "tol": s.tol,
                        "verdict": "pass" if s.passed else "fail", "details": s.details} for s in t9.stages],
            "verdict": "pass" if t9.passed else "fail",
            "failing_stage": t9.failing_stage,
            "counterexample": t9.counterexample,
            "skipped": _skip_block(prep9),
        }
        if t9.counterexample:
            code = EXIT_COUNTEREXAMPLE

    if any(a["counts"]["counterexample"] for a in data["audits"]):
        code = EXIT_COUNTEREXAMPLE
    return finish(code, "counterexample found" if code == EXIT_COUNTEREXAMPLE else "consistent")


def _ratio(m) -> dict:
    """alpha(xi)/theta(xi) where theta(xi) is not tiny, to expose factor mismatches."""
    a = np.concatenate([m["alpha_e1"], m["alpha_e2"]])
    t = np.concatenate([m["theta_e1"], m["theta_e2"]])
    ok = np.abs(t) > 1e-6
    if not ok.any():
        return {"count": 0}
    r = a[ok] / t[ok]
    return {"count": int(ok.sum()), "min": float(r.min()), "max": float(r.max())}


# -- emitting -------------------------------------------------------------------


def _plain(x):
    """numpy scalars and tuples to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def to_json(report: Report) -> str:
    return json.dumps(_plain(report.data), sort_keys=True, indent=1) + "\n"


def to_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"point_x{i + 1}" for i in range(DIM)] + ["check_id", "residual"])
    for p, cid, r in report.rows:
        w.writerow([repr(float(x)) for x in p] + [cid, repr(r)])
    return buf.getvalue()


def to_summary(report: Report) -> str:
    d = report.data
    lines = [f"scene {d['scene']['name']}  seed {d['seed']}  status {d['status']} (exit {d['exit_code']})"]
    for c in d["checks"]:
        lines.append(f"  [{c['verdict']:4s}] {c['id']:26s} max {c['max']:.3e}  tol {c['tol']:.0e}  {c['anchor']}")
    for a in d["audits"]:
        n = a["counts"]["counterexample"]
        lines.append(f"  [{'CEX ' if n else 'ok  '}] audit {a['id']:20s} {a['counts']}  {a['anchor']}")
    if "theorem9" in d:
        t = d["theorem9"]
        lines.append(f"  theorem9 {t['verdict']} (failing stage: {t['failing_stage']})")
        for s in t["stages"]:
            lines.append(f"    [{s['verdict']:4s}] {s['name']:26s} {s['residual']:.3e}  {s['anchor']}")
    for e in d["errors"]:
        lines.append(f"  error: {e}")
    return "\n".join(lines) + "\n"


def emit(report: Report, fmt: str, path: str) -> None:
    text = {"json": to_json, "csv": to_csv, "csv-samples": to_csv, "summary": to_summary,
            "summary-text": to_summary}[fmt](report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- command line ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="folia", description="Verify complex foliations on Kähler surfaces.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run verification suites on a scene")
    r.add_argument("--scene", required=True, help="scene TOML path or builtin:NAME(args)")
    r.add_argument("--suites", help=f"comma list from {','.join(SUITES)} (default: all that apply)")
    r.add_argument("--samples", type=int, default=200)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--tol-algebraic", type=float, default=TOL_ALGEBRAIC)
    r.add_argument("--tol-derived", type=float, default=TOL_DERIVED)
    r.add_argument("--out", help="JSON report path (stdout summary only when omitted)")
    r.add_argument("--emit", action="append", default=[], metavar="FORMAT:PATH",
                   help="extra output, e.g. csv:samples.csv or summary:report.txt")
    r.add_argument("--g2-variant", choices=("symmetric", "printed"), default="symmetric")
    r.add_argument("--h-convention", choices=("E", "Delta"), default="E")
    d = sub.add_parser("dump", help="print a builtin scene as TOML")
    d.add_argument("scene", help="builtin:NAME(args)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        scene = load_scene(args.scene)
        if args.command == "dump":
            sys.stdout.write(dump_scene(scene))
            return EXIT_OK
        suites = None if args.suites is None else tuple(s.strip() for s in args.suites.split(",") if s.strip())
        opts = Options(suites, args.samples, args.seed, args.tol_algebraic, args.tol_derived,
                       args.g2_variant, args.h_convention)
        report = run(scene, opts)
        if args.out:
            emit(report, "json", args.out)
        for spec in args.emit:
            fmt, _, path = spec.partition(":")
            if not path:
                raise SceneError(f"--emit expects FORMAT:PATH, got {spec!r}", "emit", None, "config")
            emit(report, fmt, path)
    except SceneError as err:
        print(f"folia: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, OSError) as err:
        print(f"folia: {err}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(to_summary(report))
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
