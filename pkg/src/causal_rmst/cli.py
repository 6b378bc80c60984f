"""Command-line interface: ``estimate``, ``simulate``, ``benchmark`` and ``truth``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .bootstrap import bootstrap_ci
from .data import read_csv, restrict, write_csv
from .errors import FitError, TooManyFailures, ValidationError
from .estimators import HAJEK_METHODS, METHODS, EstimatorSpec, estimate
from .nuisance.features import FEATURE_MAPS
from .nuisance.nuisance_set import NUISANCE_NAMES, NuisanceConfig, misspecify
from .simulation import generate, load_benchmark, preset, replicate_seed, results_csv, run_benchmark, true_rmst

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_manifest(path: str | None, manifest: dict, started: str) -> None:
    if not path:
        return
    doc = dict(manifest, started=started, finished=_dt.datetime.now(_dt.timezone.utc).isoformat())
    Path(path).write_text(_dump(doc))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _nuisance_config(args) -> NuisanceConfig:
    f = args.features
    cfg = NuisanceConfig(outcome_features=f, censoring_features=f, treatment_features=f,
                         censoring_clip=args.censoring_clip,
                         propensity_clip=(args.propensity_clip, 1 - args.propensity_clip))
    if args.misspecify:
        cfg = misspecify(cfg, [w.strip() for w in args.misspecify.split(",") if w.strip()])
    return cfg


def cmd_estimate(args) -> int:
    started = _now()
    d = read_csv(args.data)
    rd = restrict(d, args.tau)
    spec = EstimatorSpec(args.method, args.normalization, _nuisance_config(args))
    est = estimate(rd, spec)
    manifest = {
        "command": "estimate",
        "config": {"method": spec.method, "normalization": spec.normalization, "tau": rd.tau,
                   "nuisance": asdict(spec.nuisance_config),
                   "bootstrap": args.bootstrap, "level": args.level},
        "input_digest": d.digest(),
        "version": __version__,
        "seed": args.seed,
    }
    doc = est.to_dict()
    if args.bootstrap:
        bs = bootstrap_ci(rd, spec, B=args.bootstrap, level=args.level, seed=args.seed,
                          threads=args.threads, point=est.theta)
        doc["se"] = bs.se
        doc["ci"] = [bs.ci_lower, bs.ci_upper]
        doc["bootstrap"] = {"B": bs.B, "level": bs.level, "n_failed": bs.n_failed}
    doc["manifest"] = manifest
    _emit(_dump(doc), args.out)
    _write_manifest(args.manifest, manifest, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    cfg = preset(args.preset, **({"shift": args.shift} if args.shift is not None else {}))
    if args.rep is not None:
        seed = replicate_seed(args.seed, args.scenario or args.preset, args.n, args.rep)
    else:
        seed = args.seed
    sd = generate(cfg, args.n, seed)
    if not args.out:
        raise ValidationError("simulate needs --out for the CSV file")
    write_csv(sd.data, args.out)
    manifest = {"command": "simulate", "config": cfg.to_dict() | {"n": args.n, "rep": args.rep,
                                                                  "scenario": args.scenario},
                "input_digest": sd.data.digest(), "version": __version__, "seed": args.seed}
    _write_manifest(args.manifest, manifest, started)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    started = _now()
    bench = load_benchmark(args.config)
    if args.seed is not None:
        bench = replace(bench, master_seed=args.seed)
    res = run_benchmark(bench, threads=args.threads, progress=True)
    reps, summary = results_csv(res)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "replicates.csv").write_text(reps)
    (out / "summary.csv").write_text(summary)
    for c in res.censoring:
        print(f"[benchmark] {c['scenario']} n={c['n']}: censored before tau {c['censored_fraction']:.3f}",
              file=sys.stderr)
    manifest = {"command": "benchmark", "config": json.loads(Path(args.config).read_text()),
                "input_digest": None, "version": __version__, "seed": bench.master_seed}
    _write_manifest(args.manifest, manifest, started)
    return EXIT_OK


def cmd_truth(args) -> int:
    started = _now()
    cfg = preset(args.preset, **({"shift": args.shift} if args.shift is not None else {}))
    tau = cfg.tau if args.tau is None else args.tau
    draws = int(float(args.draws))
    mean, se = true_rmst(cfg, tau, draws, seed=args.seed)
    doc = {"preset": args.preset, "tau": tau, "draws": draws, "seed": args.seed, "shift": cfg.shift,
           "truth": mean, "mc_se": se, "version": __version__}
    _emit(_dump(doc), args.out)
    _write_manifest(args.manifest, {"command": "truth", "config": doc, "input_digest": None,
                                    "version": __version__, "seed": args.seed}, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causal-rmst", description="Causal RMST difference estimation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default=None)
        sp.add_argument("--manifest", default=None, help="write a run manifest (with timestamps) here")

    e = sub.add_parser("estimate", help="estimate the RMST difference from a CSV file")
    e.add_argument("data")
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--tau", type=float, required=True)
    e.add_argument("--normalization", default="standard", choices=("standard", "hajek"),
                   help=f"hajek is available for {', '.join(HAJEK_METHODS)}")
    e.add_argument("--features", default="linear", choices=sorted(FEATURE_MAPS))
    e.add_argument("--misspecify", default="", help=f"comma list from {', '.join(NUISANCE_NAMES)}")
    e.add_argument("--censoring-clip", type=float, default=0.01)
    e.add_argument("--propensity-clip", type=float, default=0.01)
    e.add_argument("--bootstrap", type=int, default=0, metavar="B")
    e.add_argument("--level", type=float, default=0.95)
    common(e)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="draw a dataset from a preset design")
    s.add_argument("--preset", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--rep", type=int, default=None, help="use the benchmark seed of this replication")
    s.add_argument("--scenario", default=None, help="benchmark scenario name (defaults to the preset)")
    s.add_argument("--shift", type=float, default=None)
    common(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="run a replication benchmark from a JSON config")
    b.add_argument("config")
    common(b, seed_default=None)
    b.set_defaults(func=cmd_benchmark)

    t = sub.add_parser("truth", help="Monte Carlo ground truth of a preset")
    t.add_argument("--preset", required=True)
    t.add_argument("--tau", type=float, default=None)
    t.add_argument("--draws", default="1000000")
    t.add_argument("--shift", type=float, default=None)
    common(t)
    t.set_defaults(func=cmd_truth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FitError, TooManyFailures, ArithmeticError) as exc:
        print(f"fit error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
