"""``tile360`` command line: run, sweep, report, gen-fixtures, verify.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import LEARNED, ConfigError, ExperimentSpec, parse_config, write_default_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

DEFAULT_EPS = "0.05,0.2,0.3,0.5"
DEFAULT_LAM = "0.05,0.5,0.95,0.99"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if not vals:
        raise ConfigError("empty value list")
    return vals


def _spec(args) -> ExperimentSpec:
    if not args.config:
        raise ConfigError("--config is required")
    spec = parse_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed, train=replace(spec.train, seed=args.seed))
    if args.out is not None:
        spec = replace(spec, out=Path(args.out))
    if args.policy is not None:
        spec = replace(spec, policy=args.policy)
    if args.objective is not None:
        spec = replace(spec, objective=args.objective)
    if args.mode is not None:
        if args.policy is not None and args.policy not in LEARNED:
            raise ConfigError("--mode applies only to learned policies")
        spec = replace(spec, policy=args.mode)
    spec.validate()
    return spec


def cmd_run(args) -> int:
    from .experiment import run

    res = run(_spec(args))
    m = res.summary["mean"]
    print(f"{res.policy}: mean QoE {m['mean_qoe']:.4f}, freeze frequency {m['freeze_freq']:.4f} -> {res.bundle}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import sweep

    spec = _spec(args)
    results = sweep(spec, _floats(args.eps), _floats(args.lam))
    for (eps, lam), res in results.items():
        print(f"eps={eps:g} lam={lam:g}: mean QoE {res.summary['mean']['mean_qoe']:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiment import report

    target = args.dir or args.out
    if target is None:
        raise ConfigError("report needs a result directory")
    for e in report(target):
        print(f"{e['policy']:<12} normalized {e['normalized']:.4f}  mean QoE {e['mean_qoe']:.4f}")
    return EXIT_OK


def cmd_gen_fixtures(args) -> int:
    from .fixtures import write_fixture_set

    out = Path(args.out or "fixtures")
    seed = 7 if args.seed is None else args.seed
    paths = write_fixture_set(out, seed=seed, n_traces=args.traces, segments=args.segments)
    write_default_config(
        out / "experiment.ini",
        experiment={
            "seed": str(seed),
            "policy": args.policy or "mappo",
            "objective": args.objective or "(1,1,1,1)",
        },
        env={"manifest": "manifest.txt", "traces": "traces", "predictions": "predictions.txt", "viewpoints": "viewpoints.txt"},
    )
    for name, p in paths.items():
        print(f"{name}: {p}")
    print(f"config: {out / 'experiment.ini'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    ok = run_checks(seed=0 if args.seed is None else args.seed, full=args.full)
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--policy", choices=("mappo", "ippo", "bb", "rb", "mpc", "dynamic", "random"))
    common.add_argument("--objective", help='QoE preset, e.g. "(1,1,1,1)"')
    common.add_argument("--mode", choices=LEARNED, help="learned policy variant")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="tile360", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="train and/or evaluate one policy").set_defaults(fn=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="clip-epsilon x lambda grid")
    p.add_argument("--eps", default=DEFAULT_EPS, help=f"comma list (default {DEFAULT_EPS})")
    p.add_argument("--lam", default=DEFAULT_LAM, help=f"comma list (default {DEFAULT_LAM})")
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("report", parents=[common], help="normalized comparison table")
    p.add_argument("dir", nargs="?")
    p.set_defaults(fn=cmd_report)
    p = sub.add_parser("gen-fixtures", parents=[common], help="synthetic manifest, traces and viewpoints")
    p.add_argument("--traces", type=int, default=10)
    p.add_argument("--segments", type=int, default=30)
    p.set_defaults(fn=cmd_gen_fixtures)
    p = sub.add_parser("verify", parents=[common], help="run the built-in oracle checks")
    p.add_argument("--full", action="store_true", help="include toy training runs")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"tile360: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"tile360: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logging.getLogger("tile360").debug("failure", exc_info=True)
        print(f"tile360: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
