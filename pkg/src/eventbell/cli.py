"""Command-line front end: ``eventbell {run,sweep,oracle,analyze}``.

The output directory is taken from ``--out``, else the ``EVENTBELL_OUT``
environment variable, else the config's ``out`` key.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from .config import load_config, validate
from .config import _number_list
from .errors import EventBellError
from . import experiments

OUT_ENV = "EVENTBELL_OUT"


def _out_dir(args, cfg=None):
    if args.out:
        return args.out
    if os.environ.get(OUT_ENV):
        return os.environ[OUT_ENV]
    return cfg.out if cfg is not None else "out"


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = validate(replace(cfg, seed=args.seed))
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _report(summary):
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))


def cmd_run(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    _report(experiments.run(cfg, out))
    print(f"wrote {out}", file=sys.stderr)


def cmd_sweep(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    try:
        values = _number_list(args.values)
    except ValueError as exc:
        raise EventBellError(f"--values: {exc}") from exc
    rows = experiments.sweep(cfg, args.parameter, values, out)
    print(f"wrote {len(rows)} rows to {os.path.join(out, 'sweep.csv')}", file=sys.stderr)


def cmd_oracle(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    experiments.oracle_report(cfg, out)
    print(f"wrote {out}", file=sys.stderr)


def cmd_analyze(args):
    tau, W = 1.0, None
    if args.config:
        cfg = load_config(args.config)
        tau, W = cfg.tau, cfg.W
    if args.tau is not None:
        tau = args.tau
    if args.W is not None:
        W = _number_list(args.W)
    if not W:
        W = (tau,)
    out = _out_dir(args)
    rows, chsh_rows = experiments.analyze_logs(args.logs, tau, W, out)
    for W_, S in chsh_rows:
        print(f"W={W_}: S={S}")
    print(f"wrote {len(rows)} rows to {os.path.join(out, 'correlations.csv')}", file=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="eventbell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="config file ([run] section)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else config)")

    sp = sub.add_parser("run", help="run the configured experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="one run per value of a parameter")
    common(sp)
    sp.add_argument("--parameter", required=True, help="phi, W, eta, gamma, alpha or chi")
    sp.add_argument("--values", required=True, help="comma list or linspace(a, b, n); 'deg' allowed")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="write theory values in the simulation CSV schema")
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("analyze", help="re-analyze stored photon logs with new tau / W")
    common(sp, need_config=False)
    sp.add_argument("--logs", required=True, help="log prefix; reads <prefix>_station{1,2}.csv")
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--W", default=None, help="window list, e.g. '1, 2, 10'")
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (EventBellError, OSError) as exc:
        print(f"eventbell: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
