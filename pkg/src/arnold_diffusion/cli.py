"""Command-line entry point: ``arnold-diffusion <stage> [options]``.

Settings come from built-in defaults, then ``--config file.json``, then
flags.  Every run writes its resolved configuration and a manifest into a
fresh run directory under ``--out`` (or ``$ARNOLD_OUTPUT_ROOT``).

Exit codes: 0 success, 1 usage error, 2 domain error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments, manifolds, melnikov
from .bessi import DiffusionOrbit
from .errors import DomainError, NumericalFailure
from .integrate import flow
from .model import ModelParams, PhasePoint, Perturbation
from .torus import find_critical_points

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "epsilon": 0.25,
    "mu": 1e-3,
    "perturbation": None,
    "a": 0.5,
    "a_prime": None,
    "a_minus": 0.0,
    "a_plus": 0.5,
    "step": None,
    "resolution": None,
    "seed": 0,
    "threads": 1,
    "out": None,
    "duration": 100.0,
    "t0": 0.0,
    "theta": 0.0,
    "q": 0.0,
    "I": None,
    "p": 0.0,
    "N": 32,
    "sign": "plus",
    "c": None,
    "mus": None,
}

SCALING_MUS = [4e-4, 8e-4, 1.6e-3, 3.2e-3]
GAP_MUS = [1e-2, 1e-3, 1e-4]
# Settings that do not change results; kept out of the hash and the recorded config.
RUNTIME_KEYS = ("out", "threads")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str):
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _ints(text: str):
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared settings")
    g.add_argument("--config", help="JSON file of settings (flags override it)")
    g.add_argument("--epsilon", type=float, default=None)
    g.add_argument("--mu", type=float, default=None)
    g.add_argument("--a", type=float, default=None)
    g.add_argument("--a-prime", dest="a_prime", type=float, default=None)
    g.add_argument("--a-minus", dest="a_minus", type=float, default=None)
    g.add_argument("--a-plus", dest="a_plus", type=float, default=None)
    g.add_argument("--out", default=None, help="root directory for run directories")
    g.add_argument("--step", type=float, default=None)
    g.add_argument("--resolution", type=_ints, default=None, help="comma-separated grid sizes, e.g. 16,16")
    g.add_argument("--seed", type=int, default=None, help="recorded for replay; the pipeline is deterministic")
    g.add_argument("--threads", type=int, default=None, help="worker cap for independent runs")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="arnold-diffusion", description="Drift along transition chains in a priori unstable systems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="integrate one orbit")
    p.add_argument("--duration", type=float, default=None)
    for name in ("t0", "theta", "q", "I", "p"):
        p.add_argument(f"--{name}", dest=name, type=float, default=None)

    p = sub.add_parser("melnikov", parents=[common], help="Melnikov field and its critical points")
    p.add_argument("--N", type=int, default=None)

    p = sub.add_parser("manifold", parents=[common], help="generating-function grid of one whisker")
    p.add_argument("--sign", choices=["plus", "minus"], default=None)

    sub.add_parser("splitting", parents=[common], help="splitting field on the section and its critical points")

    for name, helptext in (("chain", "transition chain between two levels"), ("diffuse", "drift orbit")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--c", type=float, default=None, help="chain spacing constant (default: measured)")

    p = sub.add_parser("scaling", parents=[common], help="drift time against mu")
    p.add_argument("--mus", type=_floats, default=None)
    p.add_argument("--c", type=float, default=None)

    p = sub.add_parser("gaps", parents=[common], help="gap width against chain step")
    p.add_argument("--mus", type=_floats, default=None)
    p.add_argument("--c", type=float, default=None, help="chain constant (default: link-threshold bisection)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise DomainError("config must be a JSON object")
        unknown = set(doc) - set(cfg)
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _params(cfg) -> ModelParams:
    pert = Perturbation.arnold() if cfg["perturbation"] is None else Perturbation(
        tuple(tuple(t) for t in cfg["perturbation"]))
    return ModelParams(float(cfg["epsilon"]), float(cfg["mu"]), pert)


def _res(cfg, default):
    r = cfg["resolution"] or default
    if len(r) != len(default):
        raise DomainError(f"resolution needs {len(default)} entries, got {r}")
    return tuple(int(x) for x in r)


def _step(cfg, default):
    return float(cfg["step"]) if cfg["step"] is not None else default


def _cmd_simulate(cfg, run):
    params = _params(cfg)
    I0 = cfg["a"] if cfg["I"] is None else cfg["I"]
    x0 = PhasePoint(cfg["t0"], cfg["theta"], cfg["q"], I0, cfg["p"])
    seg = flow(params, x0, float(cfg["duration"]), _step(cfg, 1e-3))
    seg.to_csv(run.file("orbit.csv"))
    return {"samples": len(seg), "I_drift": float(np.abs(seg.I - seg.I[0]).max())}


def _cmd_melnikov(cfg, run):
    params = _params(cfg)
    fld = melnikov.melnikov_field(params, cfg["a"], int(cfg["N"]))
    crit = melnikov.critical_points(fld)
    fld.to_csv(run.file("melnikov.csv"))
    crit.to_json(run.file("critical_points.json"))
    return {"critical_points": len(crit), "degenerate_field": crit.degenerate_field}


def _cmd_manifold(cfg, run):
    params = _params(cfg)
    sign = manifolds.PLUS if cfg["sign"] == "plus" else manifolds.MINUS
    grid = manifolds.compute_generating_function(params, cfg["a"], sign, _res(cfg, manifolds.DEFAULT_RESOLUTION),
                                                 _step(cfg, 1e-3))
    grid.to_csv(run.file("generating_function.csv"))
    return {"shape": list(grid.values.shape), "hj_residual": float(np.max(np.abs(grid.hj_residual)))}


def _cmd_splitting(cfg, run):
    params = _params(cfg)
    a = float(cfg["a"])
    a_prime = a if cfg["a_prime"] is None else float(cfg["a_prime"])
    fld = manifolds.sigma(params, a, a_prime, _res(cfg, (32, 32)), _step(cfg, 1e-3), heteroclinic=a != a_prime)
    fld.to_csv(run.file("sigma.csv"))
    points, flat = find_critical_points(fld.interpolant)
    doc = {"degenerate_field": flat, "points": [p.to_dict() for p in points]}
    run.file("critical_points.json").write_text(json.dumps(doc, indent=2))
    return {"critical_points": len(points), "mean": float(fld.values.mean())}


def _c_for(cfg, params, a):
    if cfg["c"] is not None:
        return float(cfg["c"])
    return 0.5 * experiments.link_threshold(params, a, resolution=_res(cfg, (16, 16)),
                                            step=_step(cfg, experiments.DRIFT_STEP))


def _cmd_chain(cfg, run):
    params = _params(cfg)
    c = _c_for(cfg, params, cfg["a_plus"]) if params.mu > 0 else 1.0
    ch = manifolds.build_chain(params, cfg["a_minus"], cfg["a_plus"], c, _res(cfg, (16, 16)),
                               _step(cfg, experiments.DRIFT_STEP))
    ch.to_json(run.file("chain.json"))
    return {"k": ch.k, "c_used": ch.c_used}


def _cmd_diffuse(cfg, run):
    params = _params(cfg)
    orbit: DiffusionOrbit = experiments.drift_run(
        params, cfg["a_minus"], cfg["a_plus"], c=cfg["c"], resolution=_res(cfg, (16, 16)),
        step=_step(cfg, experiments.DRIFT_STEP),
    )
    orbit.to_csv(run.file("orbit.csv"))
    orbit.to_json(run.file("summary.json"))
    run.file("junctions.json").write_text(json.dumps(orbit.meta, indent=2, default=float))
    return orbit.summary()


def _cmd_scaling(cfg, run):
    params = _params(cfg)
    mus = cfg["mus"] or SCALING_MUS
    fit = experiments.time_scaling(params, mus, cfg["a_minus"], cfg["a_plus"], threads=int(cfg["threads"]),
                                   c=cfg["c"], resolution=_res(cfg, (16, 16)),
                                   step=_step(cfg, experiments.DRIFT_STEP))
    fit.to_csv(run.file("scaling.csv"))
    return fit.to_dict()


def _cmd_gaps(cfg, run):
    mus = cfg["mus"] or GAP_MUS
    c = cfg["c"]
    if c is None:
        params = _params(cfg)
        c = experiments.link_threshold(params, cfg["a"], resolution=_res(cfg, (16, 16)),
                                       step=_step(cfg, experiments.DRIFT_STEP))
    rows = experiments.gap_report(mus, c)
    experiments.write_rows_csv(run.file("gaps.csv"), rows)
    return {"c": c, "rows": rows}


COMMANDS = {
    "simulate": _cmd_simulate,
    "melnikov": _cmd_melnikov,
    "manifold": _cmd_manifold,
    "splitting": _cmd_splitting,
    "chain": _cmd_chain,
    "diffuse": _cmd_diffuse,
    "scaling": _cmd_scaling,
    "gaps": _cmd_gaps,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        recorded = {k: v for k, v in cfg.items() if k not in RUNTIME_KEYS}
        run_dir = experiments.RunDirectory(cfg["out"], args.command, recorded)
        outcome = COMMANDS[args.command](cfg, run_dir)
        run_dir.write_manifest(outcome)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalFailure as exc:
        print(f"numerical failure in stage {exc.stage or args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(run_dir.path)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
