"""Command-line experiment runner.

Every subcommand takes an optional ``--config`` JSON file whose keys are the
long flag names (dashes or underscores); flags given on the command line win.
Output files start with a ``# config-sha256=...`` line hashing the effective
configuration.  Exit codes: 0 success, 1 usage or I/O error, 2 numerical
non-convergence or an exponent/guard violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from .controlled import q_p
from .errors import (DomainError, ExponentError, GuardError, NonConvergenceError,
                     PathFormatError, PathRdeError)
from .functionals import (StoppedPath, constant, endpoint, linear_endpoint, regularity_report,
                          remainder_scaling, running_max, smoothed_running_max)
from .oracle import OracleConfig, fd_derivative_check, pvar_bruteforce
from .path_core import DiscretePath, p_variation_exact, p_variation_greedy
from .rde_solver import RdeProblem, solve
from .rough_integral import integrate_functional, sewing_slope
from .rough_lift import RoughPath, brownian_lift, chen_defect, smooth_lift

EXACT_LIMIT = 4096

DEFAULTS = {
    "p": 2.1, "tol": 1e-10, "max_iter": 50, "out": None, "interval": None,
    "driver": "linear:65", "functional": "identity", "sigma": "identity", "b": "zero",
    "xi": "1.0", "experiment": "exp-ode", "sizes": None, "seeds": 3, "h": 1e-5,
    "refinement": 16, "enumeration_cap": 12,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- parsing of specs -------------------------------------------------------

def read_path(path: str) -> DiscretePath:
    """Load a path from CSV (``t, x_1..x_d``) or the JSON envelope."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PathFormatError(f"{path}: invalid JSON ({exc})") from exc
        return DiscretePath.from_json(data.get("base", data))
    return DiscretePath.from_csv(text)


def build_driver(spec: str, p: float, refinement: int = 16) -> RoughPath:
    """``brownian:seed:n[:T[:d]]``, ``linear:n[:T]`` or a CSV/JSON file."""
    parts = spec.split(":")
    try:
        if parts[0] == "brownian":
            seed, n = int(parts[1]), int(parts[2])
            T = float(parts[3]) if len(parts) > 3 else 1.0
            d = int(parts[4]) if len(parts) > 4 else 1
            return brownian_lift(seed, n, T, d, p, refinement)
        if parts[0] == "linear":
            n = int(parts[1])
            T = float(parts[2]) if len(parts) > 2 else 1.0
            t = np.linspace(0.0, T, n)
            return smooth_lift(DiscretePath(t, t), p)
    except (IndexError, ValueError) as exc:
        raise UsageError(f"bad driver spec {spec!r}: {exc}") from exc
    if spec.endswith(".json") and os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            data = json.load(fh)
        if "second_level" in data:
            rp = RoughPath.from_json(data)
            return RoughPath(rp.base, rp.second_level, p, rp.anchored) \
                if rp.p_exponent != p else rp
        return smooth_lift(DiscretePath.from_json(data), p)
    return smooth_lift(read_path(spec), p)


def build_functional(spec: str, d: int = 1):
    """Functional ids: identity, zero, const:c, linear:a, max, smax:eps=E:kind."""
    parts = spec.split(":")
    name = parts[0]
    try:
        if name == "identity":
            return endpoint(d)
        if name == "zero":
            return constant(np.zeros(d), d)
        if name == "const":
            return constant(np.full(d, float(parts[1])), d)
        if name == "linear":
            return linear_endpoint(float(parts[1]) * np.eye(d))
        if name == "max":
            return running_max()
        if name == "smax":
            eps, kind = 0.25, "quintic"
            for item in parts[1:]:
                if item.startswith("eps="):
                    eps = float(item[4:])
                elif item in ("quintic", "quadratic"):
                    kind = item
                else:
                    eps = float(item)
            return smoothed_running_max(eps, kind)
    except (IndexError, ValueError) as exc:
        raise UsageError(f"bad functional spec {spec!r}: {exc}") from exc
    raise UsageError(f"unknown functional {spec!r}")


def _interval(values):
    if values is None:
        return None
    if isinstance(values, str):
        values = values.replace(",", " ").split()
    if len(values) != 2:
        raise UsageError("--interval needs two times")
    return float(values[0]), float(values[1])


# -- config handling --------------------------------------------------------

def effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from exc
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, val in vars(args).items():
        if key in ("config", "func") or val is None:
            continue
        cfg[key] = val
    return cfg


def config_hash(cfg: dict) -> str:
    """sha256 of the effective configuration; the output directory is left out."""
    blob = json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _emit(cfg: dict, name: str, text: str) -> None:
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _clean(obj):
    """Recursively replace non-finite floats, which strict JSON cannot hold."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_jsonable,
                      allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return str(obj)


def _csv(header: list, rows: list, cfg: dict) -> str:
    lines = [f"# config-sha256={config_hash(cfg)}", ",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# -- commands ---------------------------------------------------------------

def cmd_pvar(cfg: dict) -> int:
    path = read_path(cfg["path"])
    ps = cfg["p"] if isinstance(cfg["p"], list) else [cfg["p"]]
    interval = _interval(cfg.get("interval"))
    i, j = path.interval_indices(interval)
    oc = OracleConfig(enumeration_cap=int(cfg["enumeration_cap"]))
    rows = []
    for p in ps:
        p = float(p)
        greedy = p_variation_greedy(path, p, interval)
        approx = (j - i + 1) > EXACT_LIMIT
        exact = greedy if approx else p_variation_exact(path, p, interval)
        brute = "n/a"
        if j - i + 1 <= oc.enumeration_cap:
            brute = pvar_bruteforce(path, p, interval, oc) ** (1.0 / p)
        rows.append([p, float(path.times[i]), float(path.times[j]), exact, greedy, brute,
                     "1" if approx else "0"])
    _emit(cfg, "pvar.csv", _csv(["p", "t", "s", "exact", "greedy", "bruteforce", "approximate"],
                                rows, cfg))
    return 0


def cmd_integrate(cfg: dict) -> int:
    p = float(cfg["p"])
    rp = build_driver(cfg.get("path") or cfg["driver"], p, int(cfg["refinement"]))
    F = build_functional(cfg["functional"], rp.dim)
    res = integrate_functional(F, rp, _interval(cfg.get("interval")))
    header = f"config-sha256={config_hash(cfg)}"
    summary = {"final_value": res.total.tolist(), "sewing_slope": sewing_slope(res),
               "estimate_terms": res.estimate_terms, "p": p, "q": q_p(p),
               "config_sha256": config_hash(cfg)}
    if cfg.get("out"):
        _emit(cfg, "integral.csv", res.to_csv(header))
        _emit(cfg, "diagnostics.csv", res.diagnostics_csv(header))
        _emit(cfg, "summary.json", _json_text(summary))
    else:
        sys.stdout.write(res.to_csv(header))
        sys.stdout.write(_json_text(summary))
    return 0


def _xi(spec) -> DiscretePath:
    if isinstance(spec, (int, float)):
        vals = [float(spec)]
    elif isinstance(spec, list):
        vals = [float(v) for v in spec]
    elif os.path.exists(str(spec)):
        return read_path(str(spec))
    else:
        try:
            vals = [float(v) for v in str(spec).split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --xi {spec!r}") from exc
    return DiscretePath([0.0], [vals])


def cmd_solve(cfg: dict) -> int:
    p = float(cfg["p"])
    rp = build_driver(cfg["driver"], p, int(cfg["refinement"]))
    xi = _xi(cfg["xi"])
    k = xi.dimension
    sigma = build_functional(cfg["sigma"], k)
    b = build_functional(cfg["b"], k)
    try:
        problem = RdeProblem(b, sigma, rp, xi, p)
        sol = solve(problem, float(cfg["tol"]), int(cfg["max_iter"]))
    except NonConvergenceError as exc:
        _emit(cfg, "windows.json", _json_text({"converged": False, "message": str(exc),
                                               "windows": exc.diagnostics,
                                               "config_sha256": config_hash(cfg)}))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    header = f"config-sha256={config_hash(cfg)}"
    _emit(cfg, "solution.csv", sol.to_csv(header))
    _emit(cfg, "windows.json", _json_text({
        "converged": True, "residual": sol.residual, "windows": sol.windows,
        "remainder_q_variation": sol.remainder_q_variation,
        "final_value": sol.path.flat[-1].tolist(), "config_sha256": config_hash(cfg)}))
    return 0


def _fit(ns, errs) -> float:
    pts = [(math.log(n), math.log(e)) for n, e in zip(ns, errs) if e > 0]
    if len(pts) < 2:
        return math.nan
    x, y = zip(*pts)
    return float(-np.polyfit(x, y, 1)[0])


def cmd_convergence(cfg: dict) -> int:
    exp = cfg["experiment"]
    p = float(cfg["p"])
    sizes = cfg.get("sizes")
    rows = []
    if exp == "exp-ode":
        sizes = sizes or [64, 128, 256, 512]
        errs = []
        for n in sizes:
            t = np.linspace(0.0, 1.0, int(n))
            rp = smooth_lift(DiscretePath(t, t), p)
            problem = RdeProblem(constant([0.0]), endpoint(1).reshaped((1, 1)), rp,
                                 DiscretePath([0.0], [[1.0]]), p)
            sol = solve(problem, float(cfg["tol"]), int(cfg["max_iter"]))
            errs.append(abs(float(sol.path.flat[-1, 0]) - math.e))
        for idx, (n, e) in enumerate(zip(sizes, errs)):
            order = "n/a" if idx == 0 else _fit(sizes[idx - 1:idx + 1], errs[idx - 1:idx + 1])
            rows.append([str(int(n)), e, order])
        rows.append(["fit", "n/a", _fit(sizes, errs)])
    elif exp == "chen-defect":
        sizes = sizes or [64, 256, 1024]
        for n in sizes:
            worst = max(chen_defect(brownian_lift(s, int(n), 1.0, 2, p, int(cfg["refinement"])))
                        for s in range(int(cfg["seeds"])))
            rows.append([str(int(n)), worst, "n/a"])
    elif exp == "remainder-scaling":
        sizes = sizes or [256, 512]
        F = build_functional(cfg.get("functional") if cfg.get("functional") != "identity"
                             else "smax:eps=0.25:quintic")
        for n in sizes:
            slopes = [remainder_scaling(F, brownian_lift(s, int(n), p=p).base, p)["slope"]
                      for s in range(int(cfg["seeds"]))]
            rows.append([str(int(n)), "n/a", min(slopes)])
        rows.append(["threshold", "n/a", (1 + 1 / p) / p - 0.15])
    else:
        raise UsageError(f"unknown experiment {exp!r}")
    _emit(cfg, f"convergence-{exp}.csv", _csv(["n", "error", "slope"], rows, cfg))
    return 0


def _probes(cfg: dict):
    p = float(cfg["p"])
    rp = build_driver(cfg["driver"], p, int(cfg["refinement"]))
    path = rp.base
    idx = np.unique(np.linspace(1, len(path) - 3, 6).round().astype(int))
    return path, [StoppedPath.from_path(path, path.times[i]) for i in idx]


def cmd_check(cfg: dict) -> int:
    path, probes = _probes(cfg)
    F = build_functional(cfg["functional"], path.dimension)
    rep = fd_derivative_check(F, probes, float(cfg["h"]))
    rep["functional_id"] = F.name
    rep["config_sha256"] = config_hash(cfg)
    _emit(cfg, "check.json", _json_text(rep))
    return 0


def cmd_report(cfg: dict) -> int:
    p = float(cfg["p"])
    seeds = int(cfg["seeds"])
    spec = cfg["driver"]
    paths = []
    if spec.startswith("brownian:"):
        parts = spec.split(":")
        for s in range(seeds):
            parts[1] = str(int(spec.split(":")[1]) + s)
            paths.append(build_driver(":".join(parts), p, int(cfg["refinement"])).base)
    else:
        paths.append(build_driver(spec, p).base)
    F = build_functional(cfg["functional"], paths[0].dimension)
    rep = regularity_report(F, paths, p=p)
    rep["config_sha256"] = config_hash(cfg)
    _emit(cfg, "report.json", _json_text(rep))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathrde", description="Rough paths with path-dependent coefficients.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default option values")
        sp.add_argument("--p", type=float, help="variation exponent p")
        sp.add_argument("--out", help="output directory (default: stdout)")
        sp.add_argument("--refinement", type=int, help="Brownian lift refinement factor")
        return sp

    sp = common(sub.add_parser("pvar", help="p-variation of a path file"))
    sp.add_argument("--path", help="CSV or JSON path file")
    sp.add_argument("--p-list", dest="p", type=float, nargs="+", help="several exponents")
    sp.add_argument("--interval", type=float, nargs=2)
    sp.add_argument("--enumeration-cap", type=int)
    sp.set_defaults(func=cmd_pvar)

    sp = common(sub.add_parser("integrate", help="rough integral of a functional"))
    sp.add_argument("--path", help="driver: file or brownian:seed:n[:T[:d]] or linear:n[:T]")
    sp.add_argument("--driver", help="alias of --path")
    sp.add_argument("--functional")
    sp.add_argument("--interval", type=float, nargs=2)
    sp.set_defaults(func=cmd_integrate)

    sp = common(sub.add_parser("solve", help="solve a path-dependent RDE"))
    sp.add_argument("--driver")
    sp.add_argument("--sigma")
    sp.add_argument("--b")
    sp.add_argument("--xi", help="initial value (comma separated) or history file")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_solve)

    sp = common(sub.add_parser("convergence", help="refinement studies"))
    sp.add_argument("--experiment", choices=["exp-ode", "chen-defect", "remainder-scaling"])
    sp.add_argument("--sizes", type=int, nargs="+")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--functional")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_convergence)

    sp = common(sub.add_parser("check", help="finite-difference derivative check"))
    sp.add_argument("--functional")
    sp.add_argument("--driver")
    sp.add_argument("--h", type=float)
    sp.set_defaults(func=cmd_check)

    sp = common(sub.add_parser("report", help="regularity report of a functional"))
    sp.add_argument("--functional")
    sp.add_argument("--driver")
    sp.add_argument("--seeds", type=int)
    sp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = effective_config(args)
        if args.command == "pvar" and not cfg.get("path"):
            raise UsageError("pvar needs --path")
        return args.func(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ExponentError, GuardError, NonConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PathFormatError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PathRdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
