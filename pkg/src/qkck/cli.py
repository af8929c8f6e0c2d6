"""Command-line front end.

Usage:
    qkck verify --suite flat --n 2 --seed 7 --report out.json
    qkck dim --manifold hpn --n 2 --loops 64 --seed 7
    qkck transport --manifold hpn --init basis:3 --waypoints path.json --check-ck
    qkck dump --what weylq-gr2 --out weylq.bin

Exit codes: 0 when every check passes, 1 when one fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, curvalg
from .ckforms import PathSpec, ProlongSection, TransportError, ck_residual, holonomy_dimension, transported_fields
from .manifolds import DomainError, flat_model, hpn_chart_model, riemann
from .suites import SUITES, SuiteConfig, SuiteError, judge, random_section, run_suite
from .tensorio import dump_tensor

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _chart(name: str, n: int):
    if n < 2:
        raise UsageError("n must be >= 2")
    if name == "flat":
        return flat_model(n)
    if name == "hpn":
        return hpn_chart_model(n)
    raise UsageError(f"unknown manifold {name!r} (expected flat or hpn)")


def _emit(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=2, default=_jsonable)
    if path:
        try:
            Path(path).write_text(text + "\n")
        except OSError as exc:
            raise UsageError(f"cannot write report to {path}: {exc}") from exc
    print(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def _summary(report: dict) -> None:
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']:<36} {c['max_residual']:.3e} ({c['kind']} {c['tolerance']:.1e})", file=sys.stderr)


# --------------------------------------------------------------------------
# subcommands


def cmd_verify(args) -> int:
    config = SuiteConfig(suite=args.suite, n=args.n, samples=args.samples, seed=args.seed, fd_step=args.fd_step,
                         tol_scale=args.tol_scale, report_path=args.report, loops=args.loops)
    try:
        config.validate()
    except SuiteError as exc:
        raise UsageError(str(exc)) from exc
    if args.report:
        _check_writable(args.report)
    report = run_suite(config)
    _summary(report)
    _emit(report, args.report)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def cmd_dim(args) -> int:
    config = SuiteConfig(suite="dim", n=args.n, seed=args.seed, manifold=args.manifold, loops=args.loops,
                         report_path=args.report)
    try:
        config.validate()
    except SuiteError as exc:
        raise UsageError(str(exc)) from exc
    if args.report:
        _check_writable(args.report)
    report = run_suite(config)
    report["fixed_dim"] = report["holonomy"]["fixed_dim"]
    _summary(report)
    _emit(report, args.report)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def _load_waypoints(path: str, m: int) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"waypoint file {path} does not exist")
    try:
        if p.suffix == ".json":
            wp = np.asarray(json.loads(p.read_text()), dtype=float)
        else:
            wp = np.loadtxt(p, ndmin=2)
    except (ValueError, OSError) as exc:
        raise UsageError(f"cannot read waypoints from {path}: {exc}") from exc
    if wp.ndim != 2 or wp.shape[1] != m or len(wp) < 2:
        raise UsageError(f"waypoints must be at least two rows of {m} coordinates, got shape {wp.shape}")
    return wp


def _initial_section(model, init: str, point, seed: int) -> ProlongSection:
    if init == "random":
        return random_section(np.random.default_rng(seed), model, point)
    if init.startswith("basis:"):
        fiber = curvalg.Fiber(model.context_at(point))
        try:
            index = int(init.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad basis index in {init!r}") from exc
        if not 0 <= index < fiber.dim:
            raise UsageError(f"basis index must lie in [0, {fiber.dim})")
        psi, X = fiber.unpack(np.eye(fiber.dim)[index])
        return ProlongSection(np.asarray(point, dtype=float), psi, X)
    raise UsageError(f"unknown init {init!r} (expected random or basis:I)")


def cmd_transport(args) -> int:
    model = _chart(args.manifold, args.n)
    wp = _load_waypoints(args.waypoints, model.m)
    init = _initial_section(model, args.init, wp[0], args.seed)
    path = PathSpec(wp, args.steps)
    psi, X, end = transported_fields(model, path, init)
    report = {
        "manifold": args.manifold,
        "n": args.n,
        "seed": args.seed,
        "init": args.init,
        "steps_per_segment": args.steps,
        "start": wp[0],
        "end": end.point,
        "psi": end.psi,
        "X": end.X,
        "drift": end.drift,
        "checks": [],
    }
    if args.check_ck:
        res = ck_residual(model, psi, end.point[None])
        report["checks"] = [judge("ck.transport_ck", res.max_ck), judge("ck.transport_codiff",
                                                                         float(np.max(res.codiff_mismatch)))]
    report["pass"] = all(c["pass"] for c in report["checks"])
    _emit(report, args.report)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def _dump_array(what: str, n: int, loops: int, seed: int, steps: int) -> tuple[np.ndarray, str, dict]:
    if what == "weylq-gr2":
        if n != 2:
            raise UsageError("the Grassmannian model exists only for n = 2")
        return curvalg.weylq_grassmannian().W, "weylq", {"model": "gr2"}
    kind, _, name = what.partition(":")
    if kind == "curvature":
        if name == "gr2":
            if n != 2:
                raise UsageError("the Grassmannian model exists only for n = 2")
            return curvalg.full_curvature(curvalg.weylq_grassmannian()), "curvature", {"model": "gr2"}
        model = _chart(name, n)
        point = np.zeros(model.m)
        R = np.zeros((model.m,) * 4) if model.is_flat else riemann(model, point)
        return R, "curvature", {"model": name, "point": point.tolist()}
    if kind == "holonomy":
        model = _chart(name, n)
        rep = holonomy_dimension(model, loops=loops, seed=seed, steps_per_segment=steps, keep_matrices=True)
        return rep.matrices, "holonomy", {"model": name, "loops": loops, "seed": seed, "steps_per_segment": steps}
    raise UsageError(f"unknown dump target {what!r}")


def cmd_dump(args) -> int:
    array, kind, meta = _dump_array(args.what, args.n, args.loops, args.seed, args.steps)
    try:
        header = dump_tensor(args.out, array, kind, args.n, **meta)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from exc
    print(json.dumps(header))
    return EXIT_PASS


def _check_writable(path: str) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"report directory {parent} does not exist")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkck", description="Verify the prolongation of compatible "
                                     "conformal-Killing 2-forms on quaternionic-Kaehler model geometries.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run a named verification suite")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=None, help="first-derivative step (default: model's own)")
    p.add_argument("--tol-scale", type=float, default=1.0)
    p.add_argument("--loops", type=int, default=64, help="holonomy loops for the dim suite")
    p.add_argument("--report", default=None, help="write the JSON report here as well")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dim", help="dimension of the space of parallel sections via holonomy")
    p.add_argument("--manifold", default="hpn")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--loops", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_dim)

    p = sub.add_parser("transport", help="transport a fiber value along a polyline")
    p.add_argument("--manifold", default="hpn")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--init", default="random", help="random or basis:I")
    p.add_argument("--waypoints", required=True, help="JSON list of points, or whitespace-separated rows")
    p.add_argument("--steps", type=int, default=200, help="RK4 steps per segment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check-ck", action="store_true")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("dump", help="write a tensor in the binary dump format")
    p.add_argument("--what", required=True, help="weylq-gr2, curvature:MODEL or holonomy:MODEL")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--loops", type=int, default=8)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"qkck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"qkck: transport failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
