"""Batch front-end: YAML config in, JSON/CSV/SVG reports out.

Exit codes: 0 when every criterion passes, 1 when some criterion fails,
2 for configuration errors (nothing is written), 3 for compute errors
(artifacts of finished experiments are kept).
"""

import argparse
import copy
import json
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import experiments as ex
from .eigensolver import solve
from .random_ensembles import FAMILIES
from .errors import ConfigError
from .potential import PolynomialPotential, harmonic, radial_power
from .quantization import PolySymbol, RadialRatioSymbol, constant_symbol

KINDS = (
    "spectrum", "weyl-law", "spectral-function", "sobolev-scan", "lr-scan", "two-sided",
    "window-uniformity", "ergodicity", "que", "heat-bound", "no-smoothing",
    "smoothing-divergence", "moyal-check",
)
BUNDLED = ("harmonic-d2-quickcheck", "acceptance-suite")

# ---------------------------------------------------------------------------
# schema

_num = {"type": "number"}
_int = {"type": "integer"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_numlist = {"type": "array", "items": _num, "minItems": 1}
_poslist = {"type": "array", "items": _pos, "minItems": 1}

_potential = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["harmonic", "radial", "polynomial"]},
        "d": {"enum": [1, 2]},
        "k": _posint,
        "monomials": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["alpha", "c"],
                "properties": {"alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                               "c": _num},
            },
        },
        "shift": _num,
        "file": {"type": "string"},
    },
}

_solver = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_axis": {"type": "integer", "minimum": 4},
        "sigma": {"anyOf": [{"type": "null"}, {"const": "adapted"}, _pos]},
        "analytic": {"type": ["boolean", "null"]},
    },
}

_window = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"a": _pos, "b": _pos, "delta": {"type": "number", "minimum": 0, "maximum": 1},
                   "D": {"anyOf": [{"type": "null"}, _pos]}, "hs": _poslist},
}

_ensemble = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"family": {"enum": list(FAMILIES)},
                   "profile": {"enum": ["isotropic"]},
                   "M": {"type": "integer", "minimum": 0}},
}

_term = {
    "type": "object",
    "additionalProperties": False,
    "required": ["x", "xi", "c"],
    "properties": {"x": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                   "xi": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                   "c": _num},
}

_observable = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {"name": {"type": "string"},
                   "preset": {"enum": ["x1^2/|z|^2", "x1*xi2/|z|^2"]},
                   "constant": _num,
                   "numerator": {"type": "array", "items": _term, "minItems": 1},
                   "power": _posint, "eps": _pos},
}

_case = {
    "type": "object",
    "additionalProperties": False,
    "required": ["potential"],
    "properties": {"potential": _potential, "solver": _solver},
}

_COMMON = {
    "kind": {"enum": list(KINDS)},
    "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "potential": _potential,
    "solver": _solver,
    "window": _window,
    "ensemble": _ensemble,
    "memory_mb": _pos,
}

_PARAMS = {
    "spectrum": {"count": _posint, "reference": {"anyOf": [{"const": "harmonic"}, {"type": "null"}, _numlist]},
                 "tol": _pos},
    "weyl-law": {"lam_lo": _pos, "lam_hi": _pos, "n_points": _posint, "tol": _pos},
    "spectral-function": {"thetas": _numlist, "ppw": _pos, "spread_tol": _pos},
    "sobolev-scan": {"thetas": _numlist, "ppw": _pos, "spread_tol": _pos, "outside_tol": _pos},
    "lr-scan": {"h": _pos, "rs": _poslist, "ppw": _pos, "exponent_tol": _pos},
    "two-sided": {"ps": {"type": "array", "items": _posint, "minItems": 1}, "thetas": _numlist,
                  "ppw": _pos, "spread_tol": _pos},
    "window-uniformity": {"lams": _poslist, "C0": {"type": "number", "minimum": 0},
                          "thetas": _numlist, "ppw": _pos, "spread_tol": _pos},
    "ergodicity": {"observables": {"type": "array", "items": _observable, "minItems": 1},
                   "slope_tol": _pos, "mean_tol": _pos},
    "que": {"js": {"type": "array", "items": _posint, "minItems": 2}, "samples": _posint,
            "observables": {"type": "array", "items": _observable, "minItems": 1}, "trend": _pos},
    "heat-bound": {"cases": {"type": "object", "additionalProperties": _case, "minProperties": 1},
                   "axis_cases": {"type": "object", "additionalProperties": {"type": "string"}},
                   "ts": _poslist, "N": _posint, "radius": _pos, "n_points": _posint,
                   "c_max": _pos, "mehler_tol": _pos},
    "no-smoothing": {"cases": {"type": "object", "additionalProperties": _case, "minProperties": 1},
                     "s_values": {"type": "array", "items": {"enum": [0.5, 1, 1.0]}, "minItems": 1},
                     "n_min": _int, "n_max": {"anyOf": [{"type": "null"}, _posint]},
                     "band": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}},
    "smoothing-divergence": {"s": _pos, "cutoffs": _poslist, "growth": _pos,
                             "plateau_tol": _pos, "pz_floor": _pos},
    "moyal-check": {"pairs": {"anyOf": [{"const": "standard"},
                                        {"type": "array", "minItems": 1,
                                         "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                   "items": {"type": "array", "items": _term,
                                                             "minItems": 1}}}]},
                    "hs": _poslist, "n_axis": {"type": "integer", "minimum": 2}, "tol": _pos},
}


def _experiment_schema():
    props = dict(_COMMON)
    for params in _PARAMS.values():
        props.update(params)
    branches = []
    for kind, params in _PARAMS.items():
        allowed = sorted(set(_COMMON) | set(params))
        branches.append({"if": {"properties": {"kind": {"const": kind}}},
                         "then": {"propertyNames": {"enum": allowed}}})
    return {"type": "object", "required": ["kind"], "properties": props, "allOf": branches}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiments"],
    "properties": {
        "name": {"type": "string"},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"anyOf": [{"type": "null"}, _posint]},
        "plots": {"type": "boolean"},
        "potential": _potential,
        "solver": _solver,
        "window": _window,
        "ensemble": _ensemble,
        "memory_mb": _pos,
        "experiments": {"type": "array", "items": _experiment_schema()},
    },
}

DEFAULTS = {
    "name": "run",
    "output": "schrolab-out",
    "seed": 0,
    "threads": None,
    "plots": True,
    "potential": {"kind": "harmonic", "d": 2},
    "solver": {"n_axis": 60, "sigma": None, "analytic": None},
    "window": {"a": 1.0, "b": 1.5, "delta": 0.0, "D": None, "hs": [0.125, 0.0625, 0.03125]},
    "ensemble": {"family": "complex-gaussian", "profile": "isotropic", "M": 500},
    "memory_mb": 4096,
}


# ---------------------------------------------------------------------------
# loading and validation


def load_text(source):
    """Config text from a path or a bundled config name."""
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in BUNDLED:
        return resources.files("schrolab").joinpath("configs", f"{source}.yaml").read_text()
    raise ConfigError(f"no config file {source!r} (bundled: {', '.join(BUNDLED)})")


def _merged(base, over):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        out[key] = copy.deepcopy(val)
    return out


def resolve(raw, seed=None, threads=None, output=None):
    """Validate a parsed config and fill defaults; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = {key: copy.deepcopy(raw.get(key, val)) for key, val in DEFAULTS.items()}
    for section in ("potential", "solver", "window", "ensemble"):
        cfg[section] = _merged(DEFAULTS[section], raw.get(section))
    if seed is not None:
        cfg["seed"] = int(seed)
    if threads is not None:
        cfg["threads"] = int(threads)
    if output is not None:
        cfg["output"] = str(output)
    entries = []
    seen = set()
    for i, item in enumerate(raw["experiments"]):
        e = copy.deepcopy(item)
        e.setdefault("id", f"{i:02d}-{e['kind']}")
        if e["id"] in seen:
            raise ConfigError(f"duplicate experiment id {e['id']!r}")
        seen.add(e["id"])
        for section in ("potential", "solver", "window", "ensemble"):
            e[section] = _merged(cfg[section], item.get(section))
        e.setdefault("memory_mb", cfg["memory_mb"])
        _check_entry(e)
        entries.append(e)
    cfg["experiments"] = entries
    return cfg


def build_potential(spec):
    if "file" in spec:
        try:
            return PolynomialPotential.from_text(Path(spec["file"]).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"potential file: {exc}") from None
    kind = spec.get("kind", "harmonic")
    d = spec.get("d", 2)
    try:
        if kind == "harmonic":
            return harmonic(d)
        if kind == "radial":
            return radial_power(d, spec.get("k", 2))
        mons = tuple((tuple(m["alpha"]), m["c"]) for m in spec.get("monomials", []))
        return PolynomialPotential(d, mons, spec.get("shift", 0.0))
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from None


def _dense_mb(potential, solver):
    if solver.get("analytic") is not False and potential.is_harmonic:
        return 0.0
    dim = solver["n_axis"] ** potential.d
    return 4 * dim * dim * 8 / 2 ** 20


def _check_entry(e):
    kind = e["kind"]
    V = build_potential(e["potential"])
    if _dense_mb(V, e["solver"]) > e["memory_mb"]:
        raise ConfigError(f"{e['id']}: dense eigensolve needs about {_dense_mb(V, e['solver']):.0f} MB,"
                          f" over the {e['memory_mb']:g} MB budget")
    w = e["window"]
    if w["b"] <= w["a"]:
        raise ConfigError(f"{e['id']}: window needs a < b")
    if w["D"] is not None:
        for h in w["hs"]:
            if w["b"] - w["a"] < w["D"] * h ** w["delta"]:
                raise ConfigError(f"{e['id']}: window width below D h^delta at h={h}")
    if kind in ("que",) and not V.is_harmonic:
        raise ConfigError(f"{e['id']}: que needs the harmonic potential")
    for case in (e.get("cases") or {}).values():
        cv = build_potential(case["potential"])
        solver = _merged(e["solver"], case.get("solver"))
        if _dense_mb(cv, solver) > e["memory_mb"]:
            raise ConfigError(f"{e['id']}: a case exceeds the memory budget")
    for label, target in (e.get("axis_cases") or {}).items():
        cases = e.get("cases") or {}
        if label not in cases or target not in cases:
            raise ConfigError(f"{e['id']}: axis_cases refers to an unknown case")
    for obs in e.get("observables") or []:
        build_observable(obs, V.d)


def build_observable(spec, d):
    given = [k for k in ("preset", "constant", "numerator") if k in spec]
    if len(given) != 1:
        raise ConfigError(f"observable {spec['name']!r}: give exactly one of preset, constant, numerator")
    if "preset" in spec:
        return ex.default_observables(d)[spec["preset"]]
    if "constant" in spec:
        return constant_symbol(d, float(spec["constant"]))
    try:
        num = _poly(spec["numerator"], d)
    except ValueError as exc:
        raise ConfigError(f"observable {spec['name']!r}: {exc}") from None
    return RadialRatioSymbol(num, power=spec.get("power", 1), eps=spec.get("eps", 0.1))


def _poly(terms, d):
    return PolySymbol(d, tuple(((tuple(t["x"]), tuple(t["xi"])), t["c"]) for t in terms))


def standard_pairs():
    """Five polynomial pairs, in d=1 and d=2, of degree up to three."""
    z = (0, 0)
    return [
        (PolySymbol(1, ((((1,), (0,)), 1.0),)), PolySymbol(1, ((((0,), (1,)), 1.0),))),
        (PolySymbol(1, ((((2,), (0,)), 1.0),)), PolySymbol(1, ((((0,), (2,)), 1.0),))),
        (PolySymbol(1, ((((3,), (0,)), 1.0), (((0,), (1,)), 2.0))), PolySymbol(1, ((((1,), (2,)), 1.0),))),
        (PolySymbol(2, ((((2, 0), z), 1.0), ((z, (0, 2)), 1.0))), PolySymbol(2, ((((1, 1), z), 1.0),))),
        (PolySymbol(2, ((((1, 0), (1, 0)), 1.0),)), PolySymbol(2, ((((0, 1), (1, 1)), 1.0),))),
    ]


# ---------------------------------------------------------------------------
# execution


class _Bases:
    """Solves each (potential, solver) combination once per run."""

    def __init__(self):
        self.cache = {}

    def get(self, pot_spec, solver):
        V = build_potential(pot_spec)
        key = (V.to_text(), json.dumps(solver, sort_keys=True))
        if key not in self.cache:
            self.cache[key] = solve(V, 1.0, solver["n_axis"], sigma=solver.get("sigma"),
                                    analytic=solver.get("analytic"))
        return self.cache[key]


def _pick(e, names):
    return {n: e[n] for n in names if n in e}


def run_entry(e, seed, bases):
    kind = e["kind"]
    w = e["window"]
    ens = e["ensemble"]
    if kind in ("heat-bound", "no-smoothing"):
        cases = {label: bases.get(c["potential"], _merged(e["solver"], c.get("solver")))
                 for label, c in sorted(e["cases"].items())}
        if kind == "heat-bound":
            axis = {label: cases[target] for label, target in (e.get("axis_cases") or {}).items()}
            kw = _pick(e, ("ts", "N", "radius", "n_points", "c_max", "mehler_tol"))
            return ex.heat_bound(cases, axis_bases=axis, **kw)
        kw = _pick(e, ("s_values", "n_min", "n_max", "band"))
        return ex.no_smoothing(cases, **kw)
    if kind == "moyal-check":
        pairs = e.get("pairs", "standard")
        if pairs == "standard":
            pairs = standard_pairs()
        else:
            pairs = [(_poly(A, len(A[0]["x"])), _poly(B, len(B[0]["x"]))) for A, B in pairs]
        return ex.moyal_check(pairs, **_pick(e, ("hs", "n_axis", "tol")))
    basis = bases.get(e["potential"], e["solver"])
    win = dict(a=w["a"], b=w["b"])
    if kind == "spectrum":
        return ex.spectrum_report(basis, **_pick(e, ("count", "reference", "tol")))
    if kind == "weyl-law":
        kw = _pick(e, ("n_points", "tol"))
        return ex.weyl_law(basis, e.get("lam_lo", 10.0), e.get("lam_hi", 100.0), **kw)
    if kind == "spectral-function":
        return ex.spectral_function_check(basis, w["hs"], **win,
                                          **_pick(e, ("thetas", "ppw", "spread_tol")))
    if kind == "two-sided":
        return ex.two_sided_integrals(basis, w["hs"], **win,
                                      **_pick(e, ("ps", "thetas", "ppw", "spread_tol")))
    if kind == "window-uniformity":
        return ex.window_uniformity(basis, e.get("lams", [20, 30, 40, 50, 60]), delta=w["delta"],
                                    **_pick(e, ("C0", "thetas", "ppw", "spread_tol")))
    if kind == "sobolev-scan":
        return ex.sobolev_scan(basis, w["hs"], **win, M=ens["M"], seed=seed, family=ens["family"],
                               **_pick(e, ("thetas", "ppw", "spread_tol", "outside_tol")))
    if kind == "lr-scan":
        return ex.lr_scan(basis, e.get("h", min(w["hs"])), **win, M=ens["M"], seed=seed,
                          family=ens["family"], **_pick(e, ("rs", "ppw", "exponent_tol")))
    if kind == "ergodicity":
        obs = _observables(e, basis.d)
        return ex.ergodicity(basis, obs, w["hs"], M=ens["M"], **win, seed=seed,
                             family=ens["family"], **_pick(e, ("slope_tol", "mean_tol")))
    if kind == "que":
        obs = _observables(e, basis.d)
        return ex.que_run(basis, obs, seed=seed, **_pick(e, ("js", "samples", "trend")))
    if kind == "smoothing-divergence":
        return ex.smoothing_divergence(basis, M=ens["M"], seed=seed, family=ens["family"],
                                       **_pick(e, ("s", "cutoffs", "growth", "plateau_tol",
                                                   "pz_floor")))
    raise ConfigError(f"unknown experiment kind {kind!r}")


def _observables(e, d):
    specs = e.get("observables") or [{"name": "x1^2/|z|^2", "preset": "x1^2/|z|^2"},
                                     {"name": "x1*xi2/|z|^2", "preset": "x1*xi2/|z|^2"}]
    return {s["name"]: build_observable(s, d) for s in specs}


# ---------------------------------------------------------------------------
# plots

PLOTS = {
    "spectrum": ("index", "eigenvalue", (), False, False),
    "weyl_law": ("lambda", "count", (), True, True),
    "spectral_function": ("h", "sup_constant", ("theta",), True, False),
    "two_sided_integrals": ("h", "ratio", ("p", "theta"), True, True),
    "window_uniformity": ("lambda", "normalized", ("theta",), False, False),
    "sobolev_scan": ("h", "median_over_sqrt_log", ("theta",), True, False),
    "lr_scan": ("r", "median", (), True, True),
    "ergodicity": ("N_h", "variance", ("observable",), True, True),
    "que": ("j", "median", ("observable",), True, True),
    "heat_bound": ("t", "constant", ("case",), True, True),
    "no_smoothing": ("n", "r1", ("case", "s"), False, False),
    "smoothing_divergence": ("cutoff", "median", ("rule",), True, False),
    "moyal_check": ("pair", "rel_error", ("h",), False, True),
}


def plot_report(report, path):
    """Static SVG drawn from the report rows only."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = PLOTS.get(report.experiment)
    if spec is None:
        return False
    xk, yk, groups, logx, logy = spec
    rows = [r for r in report.rows
            if r.get(xk) is not None and r.get(yk) is not None and np.isfinite(r[yk])]
    if not rows:
        return False
    with plt.rc_context({"svg.hashsalt": "schrolab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        labels = sorted({tuple(r.get(g) for g in groups) for r in rows}, key=repr)
        for lab in labels:
            pts = sorted((r[xk], r[yk]) for r in rows if tuple(r.get(g) for g in groups) == lab)
            name = ", ".join(f"{g}={v}" for g, v in zip(groups, lab)) or yk
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", ms=3, label=name)
        positive = all(r[yk] > 0 for r in rows)
        if logx:
            ax.set_xscale("log")
        if logy and positive:
            ax.set_yscale("log")
        ax.set_xlabel(xk)
        ax.set_ylabel(yk)
        ax.set_title(report.experiment)
        if len(labels) > 1:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return True


# ---------------------------------------------------------------------------
# entry point


def plan_lines(cfg):
    lines = [f"config {cfg['name']}: {len(cfg['experiments'])} experiment(s), seed {cfg['seed']}, "
             f"output {cfg['output']}"]
    for e in cfg["experiments"]:
        V = build_potential(e["potential"])
        extra = ""
        if e["kind"] in ("heat-bound", "no-smoothing"):
            extra = f" cases={','.join(sorted(e['cases']))}"
        lines.append(f"  {e['id']:<28} {e['kind']:<21} d={V.d} k={V.k} n_axis={e['solver']['n_axis']}"
                     f" hs={e['window']['hs']} M={e['ensemble']['M']}{extra}")
    return lines


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def execute(cfg, out_stream=sys.stdout):
    """Run every experiment; returns the exit code."""
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {key: val for key, val in cfg.items() if key != "output"}
    _write(out / "config.yaml", yaml.safe_dump(snapshot, sort_keys=True))
    bases = _Bases()
    summary = []
    timing = {}
    code = 0
    for e in cfg["experiments"]:
        t0 = time.perf_counter()
        try:
            rep = run_entry(e, cfg["seed"], bases)
        except Exception as exc:  # compute errors keep earlier artifacts
            summary.append({"id": e["id"], "kind": e["kind"], "error": f"{type(exc).__name__}: {exc}"})
            timing[e["id"]] = time.perf_counter() - t0
            code = 3
            print(f"{e['id']:<28} ERROR  {type(exc).__name__}: {exc}", file=out_stream)
            break
        timing[e["id"]] = time.perf_counter() - t0
        _write(out / f"{e['id']}.json", rep.to_json() + "\n")
        rep.to_csv(out / f"{e['id']}.csv")
        if cfg["plots"]:
            plot_report(rep, out / f"{e['id']}.svg")
        summary.append({"id": e["id"], "kind": e["kind"], "passed": rep.passed,
                        "criteria": [c.to_dict() for c in rep.criteria]})
        for c in rep.criteria:
            mark = "PASS" if c.passed else "FAIL"
            print(f"{e['id']:<28} {mark}  {c.name}: {_short(c.value)} (target {c.target})",
                  file=out_stream)
        if not rep.passed and code == 0:
            code = 1
    report = {"name": cfg["name"], "seed": cfg["seed"], "experiments": summary,
              "passed": code == 0}
    _write(out / "report.json", json.dumps(ex._clean(report), sort_keys=True, indent=2) + "\n")
    _write(out / "timing.json", json.dumps(timing, sort_keys=True, indent=2) + "\n")
    return code


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def build_parser():
    p = argparse.ArgumentParser(prog="schrolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + KINDS:
        help_text = "run every experiment in the config" if name == "run" else \
            f"run only the {name} experiments of the config"
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help=f"YAML file or bundled name ({', '.join(BUNDLED)})")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="BLAS/OpenMP thread limit")
        sp.add_argument("--output", help="override the output directory")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    sub.add_parser("list-configs", help="list bundled configs")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-configs":
        for name in BUNDLED:
            print(name)
        return 0
    try:
        raw = yaml.safe_load(load_text(args.config))
        if isinstance(raw, dict) and args.command != "run":
            items = [x for x in raw.get("experiments", []) if isinstance(x, dict)
                     and x.get("kind") == args.command]
            raw = dict(raw, experiments=items or [{"kind": args.command}])
        cfg = resolve(raw, seed=args.seed, threads=args.threads, output=args.output)
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print("\n".join(plan_lines(cfg)))
        return 0
    if cfg["threads"]:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg["threads"]):
            return execute(cfg)
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
