"""Experiment configs: schema validation, orchestration and report writing.

A config is one self-describing JSON object::

    {"kind": "graph", "action": "verify-covariance",
     "spec": {"n": 30, "p": 0.5}, "reps": 20000, "master_seed": 7}

Reports are JSON with sorted keys; everything run-dependent (wall time,
timestamps, thread count) lives in a separate ``metadata`` block so that two
runs with the same config and seed produce identical reports once that block
is dropped.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
import re
import time
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import graph as G
from . import runs as RN
from .bounds import bound_weighted_pre, gammas_con, phi_n
from .errors import ConfigError, UnsupportedModeError
from .gaussian import StepMatrixFunction, build_prelimit_ustat
from .kernels import kernel_from_config, measure_from_config
from .mc import (
    covariance_zscores,
    empirical_covariance,
    estimate_distances,
    make_test_functional,
    random_test_functionals,
    rate_fit,
)
from .paths import StepPath
from .seeding import derive_rng, stable_key
from .uprocess import UProcessSampler, UProcessSpec, homsum_spec, variance_sigma, weights_from_config

KINDS = ("uprocess", "homsum", "runs", "graph")
ACTIONS = ("simulate", "bound", "verify-covariance", "verify-regression", "verify-distance", "rate-study")
DEFAULT_TIMES = [0.2, 0.4, 0.6, 0.8, 1.0]

# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------
_num = {"type": "number"}
_int = {"type": "integer"}
_measure = {
    "type": "object",
    "properties": {
        "atoms": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                  "minItems": 1},
        "builtin": {"enum": ["rademacher", "centered_bernoulli", "standardized_bernoulli"]},
        "p": _num,
    },
    "additionalProperties": False,
}
_weights = {
    "type": "object",
    "properties": {
        "builtin": {"enum": ["complete", "banded", "incomplete_random"]},
        "width": {"type": "integer", "minimum": 1},
        "keep": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": _int,
        "n": _int,
        "p": _int,
        "entries": {"type": "array"},
    },
    "additionalProperties": False,
}
_kernel = {
    "type": "object",
    "properties": {
        "type": {"enum": ["product", "table", "runs_builtin"]},
        "p": _int,
        "order": _int,
        "support": {"type": "array", "items": _num},
        "values": {"type": ["object", "array"]},
    },
    "required": ["type"],
    "additionalProperties": False,
}
_sigmas = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}
SPEC_SCHEMAS = {
    "graph": {
        "type": "object",
        "properties": {"n": {"type": "integer", "minimum": 4},
                       "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "required": ["p"],
        "additionalProperties": False,
    },
    "runs": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 2},
            "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "rs": {"oneOf": [{"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                             {"type": "string", "pattern": r"^\s*\d+(\s*,\s*\d+)*\s*$"}]},
            "normalization": {"enum": ["printed", "moment_consistent"]},
        },
        "required": ["p", "rs"],
        "additionalProperties": False,
    },
    "homsum": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 1},
            "orders": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "measure": _measure,
            "weights": {"oneOf": [_weights, {"type": "array", "items": _weights}]},
            "sigmas": _sigmas,
        },
        "required": ["orders"],
        "additionalProperties": False,
    },
    "uprocess": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 1},
            "measure": _measure,
            "components": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "properties": {"order": {"type": "integer", "minimum": 1}, "kernel": _kernel, "weights": _weights},
                    "required": ["order", "kernel"],
                    "additionalProperties": False,
                },
            },
            "sigmas": _sigmas,
        },
        "required": ["measure", "components"],
        "additionalProperties": False,
    },
}
_functionals = {
    "type": "object",
    "properties": {
        "count": {"type": "integer", "minimum": 1},
        "seed": _int,
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "explicit": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "times": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                    "thetas": {"type": "array", "items": {"type": "array", "items": _num}},
                    "name": {"type": "string"},
                },
                "required": ["times", "thetas"],
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "description": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "action": {"enum": list(ACTIONS)},
        "spec": {"type": "object"},
        "reps": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "times": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        "threshold_se": {"type": "number", "exclusiveMinimum": 0},
        "functionals": _functionals,
        "ns": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3},
        "empirical": {"type": "boolean"},
        "coupled_seeds": {"type": "boolean"},
        "variant": {"enum": ["simple", "sharp"]},
        "phi": {"type": "array", "items": {"type": "array", "items": _num}},
        "configurations": {"type": "integer", "minimum": 1},
        "outputs": {
            "type": "object",
            "properties": {"json": {"type": "string"}, "csv": {"type": "string"}, "svg": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["kind", "spec"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": k}}, "required": ["kind"]},
         "then": {"properties": {"spec": SPEC_SCHEMAS[k]}}}
        for k in KINDS
    ] + [
        {"if": {"properties": {"action": {"const": "rate-study"}}, "required": ["action"]},
         "then": {"required": ["ns"]}},
    ],
}


# ---------------------------------------------------------------------------
# parsing with line-precise errors
# ---------------------------------------------------------------------------
def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _locate(text: str, path, extra_key: str | None = None) -> int:
    """Best-effort source line of a JSON path (keys are searched in order)."""
    pos = 0
    keys = [k for k in path if isinstance(k, str)]
    if extra_key is not None:
        keys.append(extra_key)
    for k in keys:
        m = re.compile(r'"' + re.escape(k) + r'"\s*:').search(text, pos)
        if m is None:
            break
        pos = m.start()
    return _line_of(text, pos)


def _schema_error_message(err: jsonschema.ValidationError, text: str) -> str:
    path = list(err.absolute_path)
    where = "/".join(str(p) for p in path) or "<root>"
    extra = None
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        unknown = sorted(k for k in err.instance if k not in allowed)
        if unknown:
            extra = unknown[0]
            where = "/".join([*map(str, path), extra])
            return f"line {_locate(text, path, extra)}: unknown field {extra!r} at {where}"
    return f"line {_locate(text, path)}: {where}: {err.message}"


def parse_config(text: str) -> dict:
    """Parse and schema-validate a config; raises ConfigError with a line number."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: malformed JSON: {e.msg}") from None
    validate_config(cfg, text)
    return cfg


def validate_config(cfg: dict, text: str | None = None) -> None:
    text = json.dumps(cfg, indent=2) if text is None else text
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), list(map(str, e.absolute_path))))
    if errors:
        # the deepest error is usually the most specific one
        best = max(errors, key=lambda e: len(list(e.absolute_path)))
        raise ConfigError(_schema_error_message(best, text))


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


# ---------------------------------------------------------------------------
# building process specs
# ---------------------------------------------------------------------------
def parse_rs(rs) -> tuple:
    if isinstance(rs, str):
        return tuple(int(x) for x in rs.split(","))
    return tuple(int(x) for x in rs)


def build_spec(kind: str, scfg: dict, n: int | None = None):
    """Construct the process spec of a config, optionally at a different n."""
    scfg = dict(scfg)
    if n is not None:
        scfg["n"] = int(n)
    if "n" not in scfg:
        raise ConfigError(f"{kind}: spec.n is required (only rate studies take their sizes from 'ns')")
    if kind == "graph":
        return G.GraphSpec(int(scfg["n"]), float(scfg["p"]))
    if kind == "runs":
        return RN.RunsSpec(int(scfg["n"]), float(scfg["p"]), parse_rs(scfg["rs"]))
    N = int(scfg["n"])
    measure = measure_from_config(scfg.get("measure", {"builtin": "rademacher"}))
    if kind == "homsum":
        orders = [int(q) for q in scfg["orders"]]
        wc = scfg.get("weights", {"builtin": "complete"})
        wcs = wc if isinstance(wc, list) else [wc] * len(orders)
        if len(wcs) != len(orders):
            raise ConfigError("homsum: need one weights entry per order")
        weights = [weights_from_config(c, N, q) for c, q in zip(wcs, orders)]
        sig = scfg.get("sigmas")
        if sig is None:
            sig = variance_sigma([_product(q, measure) for q in orders], weights)
        return homsum_spec(weights, measure, sig)
    comps = scfg["components"]
    kernels = [kernel_from_config(c["kernel"], measure, int(c["order"])) for c in comps]
    weights = [weights_from_config(c.get("weights", {"builtin": "complete"}), N, int(c["order"])) for c in comps]
    sig = scfg.get("sigmas")
    if sig is None:
        sig = variance_sigma(kernels, weights)
    return UProcessSpec(N, kernels, weights, sig, measure)


def _product(q, measure):
    from .kernels import product_kernel

    return product_kernel(q, measure)


def discrete_sampler(kind: str, spec):
    if kind == "graph":
        return G.GraphSampler(spec)
    if kind == "runs":
        return RN.RunsSampler(spec)
    return UProcessSampler(spec)


def prelimit_sampler(kind: str, spec):
    if kind == "graph":
        return G.graph_prelimit_sampler(spec)
    if kind == "runs":
        return RN.runs_prelimit_sampler(spec)
    return build_prelimit_ustat(spec)


def limit_sampler(kind: str, spec, scfg: dict):
    if kind == "graph":
        return G.graph_limit_sampler(spec.p, spec.n)
    if kind == "runs":
        return RN.runs_limit_sampler(spec, normalization=scfg.get("normalization", "printed"))
    raise UnsupportedModeError(f"no continuous-limit sampler is configured for kind {kind!r}")


def prelimit_bound(kind: str, spec, variant: str = "simple") -> dict:
    if kind == "graph":
        return {"theorem": "graph_prelimit", "total": G.graph_bounds(spec.n)["pre"], "multiplier": "M"}
    if kind == "runs":
        return RN.runs_bound_pre(spec).to_dict(include_metadata=False)
    return bound_weighted_pre(spec, variant).to_dict(include_metadata=False)


def continuous_bound(kind: str, spec, cfg: dict) -> dict:
    if kind == "graph":
        return {"theorem": "graph_continuous", "total": G.graph_bounds(spec.n)["con"], "multiplier": "M"}
    if kind == "runs":
        return RN.runs_bound_con(spec).to_dict(include_metadata=False)
    phi = StepMatrixFunction.constant(cfg["phi"]) if "phi" in cfg else phi_n(spec)
    return gammas_con(spec, phi, variant=cfg.get("variant", "simple")).to_dict(include_metadata=False)


def build_functionals(cfg: dict, d: int, seed: int) -> list:
    fc = cfg.get("functionals", {})
    if "explicit" in fc:
        return [make_test_functional(f["times"], f["thetas"], name=f.get("name", f"g{i}"))
                for i, f in enumerate(fc["explicit"])]
    return random_test_functionals(int(fc.get("count", 10)), d, int(fc.get("seed", seed)),
                                   scale=float(fc.get("scale", 1.0)))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------
@dataclass
class Outcome:
    report: dict
    passed: bool = True
    csv: str | None = None
    svg: str | None = None


def _clean(x):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def report_json(report: dict, include_metadata: bool = True) -> str:
    r = dict(report)
    if not include_metadata:
        r.pop("metadata", None)
    return json.dumps(_clean(r), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# actions
# ---------------------------------------------------------------------------
def _simulate(cfg, kind, spec, seed, threads):
    R = int(cfg.get("reps", 1))
    sampler = discrete_sampler(kind, spec)
    from .seeding import replicate

    P = replicate(sampler.sample, R, seed, stable_key(sampler.label), threads=threads,
                  chunk=getattr(sampler, "chunk", 1000))
    first = StepPath(P[0])
    res = {
        "replications": R,
        "n": sampler.n,
        "d": sampler.d,
        "mean_final": P[:, -1, :].mean(axis=0),
        "mean_sup_norm": float(np.mean(np.max(np.abs(P), axis=(1, 2)))),
        "first_path_final": P[0, -1, :],
    }
    return Outcome({"results": res}, True, csv=first.to_csv())


def _bound(cfg, kind, spec, seed, threads):
    res = {"prelimit": prelimit_bound(kind, spec, cfg.get("variant", "simple"))}
    try:
        res["continuous"] = continuous_bound(kind, spec, cfg)
    except UnsupportedModeError as e:
        res["continuous"] = {"unavailable": str(e)}
    if kind == "runs":
        res["gamma1"] = res["continuous"]["terms"]["gamma1"]
        res["gamma2"] = res["continuous"]["terms"]["gamma2"]
        res["gamma3"] = res["continuous"]["terms"]["gamma3"]
        res["total"] = res["continuous"]["total"]
    return Outcome({"results": res}, True)


def _verify_covariance(cfg, kind, spec, seed, threads):
    R = int(cfg.get("reps", 20000))
    times = cfg.get("times", DEFAULT_TIMES)
    thr = float(cfg.get("threshold_se", 5.0))
    Y = empirical_covariance(discrete_sampler(kind, spec), times, R, seed, threads=threads)
    D = empirical_covariance(prelimit_sampler(kind, spec), times, R, seed, threads=threads)
    z = covariance_zscores(Y, D)
    res = {
        "replications": R,
        "times": times,
        "threshold_se": thr,
        "max_z": float(np.max(z)),
        "cov_Y": Y.cov,
        "cov_D": D.cov,
        "passed": bool(np.max(z) <= thr),
    }
    if kind == "graph":
        model = np.zeros_like(D.cov)
        for a, t in enumerate(times):
            for b, u in enumerate(times):
                model[2 * a : 2 * a + 2, 2 * b : 2 * b + 2] = G.graph_prelimit_cov(spec, t, u)
        zm = covariance_zscores(D, model)
        res["max_z_D_vs_closed_form"] = float(np.max(zm))
        res["passed"] = res["passed"] and bool(np.max(zm) <= thr)
    return Outcome({"results": res}, res["passed"])


def _verify_regression(cfg, kind, spec, seed, threads):
    if kind != "graph":
        raise ConfigError("verify-regression is available for kind 'graph' only")
    tol = 1e-12
    n = spec.n
    if n <= 5 and "configurations" not in cfg:
        configs = G.all_edge_configurations(n)
        mode = "exhaustive"
    else:
        rng = derive_rng(seed, stable_key("graph-configurations"))
        k = int(cfg.get("configurations", 100))
        configs = (G.random_edges(spec, rng) for _ in range(k))
        mode = f"random({k})"
    worst_a = worst_b = 0.0
    count = 0
    for A in configs:
        r = G.graph_regression_residual(spec, A)
        worst_a, worst_b = max(worst_a, r.A), max(worst_b, r.B)
        count += 1
    passed = worst_a <= tol and worst_b <= tol
    res = {"mode": mode, "configurations": count, "residual_A": worst_a, "residual_B": worst_b,
           "tolerance": tol, "passed": passed}
    return Outcome({"results": res}, passed)


def _verify_distance(cfg, kind, spec, seed, threads):
    R = int(cfg.get("reps", 10000))
    Y, D = discrete_sampler(kind, spec), prelimit_sampler(kind, spec)
    gs = build_functionals(cfg, Y.d, seed)
    bound = prelimit_bound(kind, spec, cfg.get("variant", "simple"))
    est = estimate_distances(Y, D, gs, R, seed, threads=threads)
    rows = []
    for e, g in zip(est, gs):
        b = bound["total"] * g.certified_norm
        rows.append({"functional": g.name, "estimate": e.estimate, "se": e.standard_error, "bound": b,
                     "dominated": e.dominated_by(b, 4.0)})
    passed = all(r["dominated"] for r in rows)
    return Outcome({"results": {"replications": R, "bound": bound, "distances": rows, "passed": passed}}, passed)


def _size_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(n)]).generate_state(1, dtype=np.uint64)[0])


def _rate_study(cfg, kind, spec_cfg, seed, threads):
    ns = [int(n) for n in cfg["ns"]]
    series = {"bound": []}
    for n in ns:
        spec = build_spec(kind, spec_cfg, n)
        series["bound"].append(continuous_bound(kind, spec, cfg)["total"])
    res = {"ns": ns, "bound": series["bound"], "bound_fit": rate_fit(ns, series["bound"]).to_dict()}
    csv_rows = [("bound", n, v, 0.0) for n, v in zip(ns, series["bound"])]
    if cfg.get("empirical", False):
        R = int(cfg.get("reps", 10000))
        coupled = bool(cfg.get("coupled_seeds", False))
        vals, ses = [], []
        for n in ns:
            spec = build_spec(kind, spec_cfg, n)
            Y, Z = discrete_sampler(kind, spec), limit_sampler(kind, spec, spec_cfg)
            gs = build_functionals(cfg, Y.d, seed)
            # independent streams per n unless common random numbers are requested
            s_n = seed if coupled else _size_seed(seed, n)
            est = estimate_distances(Y, Z, gs, R, s_n, threads=threads)
            vals.append(float(np.mean([e.estimate for e in est])))
            ses.append(float(np.sqrt(np.mean([e.standard_error**2 for e in est]))))
        res["coupled_seeds"] = coupled
        res["empirical"] = vals
        res["empirical_se"] = ses
        res["empirical_fit"] = rate_fit(ns, vals).to_dict() if all(v > 0 for v in vals) else None
        csv_rows += [("empirical", n, v, s) for n, v, s in zip(ns, vals, ses)]
    csv = "series,n,value,se\n" + "".join(f"{s},{n},{v!r},{e!r}\n" for s, n, v, e in csv_rows)
    svg = rate_svg(ns, series["bound"], res["bound_fit"]["slope"], res.get("empirical"))
    return Outcome({"results": res}, True, csv=csv, svg=svg)


ACTION_TABLE = {
    "simulate": _simulate,
    "bound": _bound,
    "verify-covariance": _verify_covariance,
    "verify-regression": _verify_regression,
    "verify-distance": _verify_distance,
}


def run_experiment(cfg: dict, *, threads: int | None = None, seed: int | None = None, reps: int | None = None) -> Outcome:
    """Execute a validated config; CLI overrides take precedence over config values."""
    cfg = dict(cfg)
    if seed is not None:
        cfg["master_seed"] = int(seed)
    if reps is not None:
        cfg["reps"] = int(reps)
    validate_config(cfg)
    threads = int(threads if threads is not None else cfg.get("threads", 1))
    seed = int(cfg.get("master_seed", 0))
    kind, action = cfg["kind"], cfg.get("action")
    if action is None:
        raise ConfigError("line 1: <root>: 'action' is required")
    t0 = time.perf_counter()
    if action == "rate-study":
        out = _rate_study(cfg, kind, cfg["spec"], seed, threads)
    else:
        spec = build_spec(kind, cfg["spec"])
        out = ACTION_TABLE[action](cfg, kind, spec, seed, threads)
    out.report.update({"kind": kind, "action": action, "spec": cfg["spec"], "master_seed": seed,
                       "reps": cfg.get("reps")})
    out.report["metadata"] = {
        "wall_time": time.perf_counter() - t0,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "threads": threads,
    }
    return out


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------
def rate_svg(ns, values, slope: float, empirical=None, width: int = 480, height: int = 320) -> str:
    """Minimal log-log chart: axes, one polyline per series, slope label."""
    pad = 40
    series = [("bound", values, "#1f77b4")]
    if empirical is not None and all(v > 0 for v in empirical):
        series.append(("empirical", empirical, "#d62728"))
    lx = np.log10(np.asarray(ns, dtype=float))
    ally = np.log10(np.concatenate([np.asarray(v, dtype=float) for _, v, _ in series]))
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ally.min(), ally.max()
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def X(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def Y(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">log10 n</text>',
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})">log10 value</text>',
    ]
    for name, v, colour in series:
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(lx, np.log10(v)))
        parts.append(f'<polyline fill="none" stroke="{colour}" points="{pts}"><title>{name}</title></polyline>')
    parts.append(f'<text x="{width - pad}" y="{pad - 10}" text-anchor="end" font-size="12">slope = {slope:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
