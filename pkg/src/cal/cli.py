"""Command-line front end: ``cal gen|run|payments|verify``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input or
usage, 3 the solver did not converge (a partial report is still printed),
4 the instance exceeds a desk-scale guard.  Set ``CAL_LOG`` to a logging
level name (``DEBUG``, ``INFO``...) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import rng
from .errors import CapacityError, ConvergenceError, InputError
from .generate import FAMILIES, corpus, generate
from .instance import dumps, load
from .mechanism import AdaptiveSampler, run_mechanism
from .rounding import RoundingConfig, conditioning_lambda
from .solver import SolveConfig
from .verify import verify_instance

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_CAPACITY = 0, 1, 2, 3, 4

PAYMENT_HEADER = ["player", "expected_payment", "sampled_mean", "sampled_stderr"]
VERIFY_HEADER = ["label", "opt_welfare", "mech_expected_welfare", "ratio", "concavity_violations", "passed"]
ADAPTIVE_MU = 1e-6

log = logging.getLogger("cal")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _csv(header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())


def _payment_rows(out):
    return [
        [i, repr(float(e)), repr(float(s)), repr(float(se))]
        for i, (e, s, se) in enumerate(zip(out.expected_payments, out.sampled_payments, out.sampled_stderr))
    ]


# ------------------------------------------------------------ commands


def cmd_gen(args) -> int:
    inst = generate(args.family, args.n, args.m, args.seed)
    text = dumps(inst)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run_adaptive(inst, args) -> int:
    mu = ADAPTIVE_MU if args.mu is None else args.mu
    lam = conditioning_lambda(inst, mu)
    sampler = AdaptiveSampler(inst, mu, lam, allow_non_mrs=args.allow_non_mrs)
    res = sampler.sample(rng.derive_seed(args.seed, "round"))
    _emit({
        "status": "ok",
        "mode": "adaptive",
        "mu": mu,
        "lambda": lam,
        "seed": args.seed,
        "allocation": res.allocation.to_json(),
        "bundles": [sorted(b) for b in res.allocation.bundles()],
        "welfare_realized": res.allocation.welfare(inst),
        "halvings": [int(h) for h in res.halvings],
        "precision_exhausted_items": res.exhausted,
    })
    return EXIT_OK


def cmd_run(args, payments_only: bool = False) -> int:
    inst = load(args.instance)
    if getattr(args, "adaptive", False):
        return _run_adaptive(inst, args)
    mu = 0.0 if args.mu is None else args.mu
    cfg = SolveConfig(epsilon=args.tolerance, max_iters=args.max_iters)
    try:
        out = run_mechanism(inst, cfg, RoundingConfig(mu), seed=args.seed, samples=args.samples,
                            allow_non_mrs=args.allow_non_mrs)
    except ConvergenceError as exc:
        _emit({
            "status": "nonconverged",
            "message": str(exc),
            "solver": {"f": exc.value, "gap": exc.gap, "iterations": exc.iterations},
            "x": None if exc.x is None else exc.x.tolist(),
        })
        return EXIT_CONVERGENCE
    if args.format == "csv":
        _csv(PAYMENT_HEADER, _payment_rows(out))
        return EXIT_OK
    report = out.to_json()
    if payments_only:
        report = {k: report[k] for k in ("expected_payments", "sampled_payments")}
    report.update({"status": "ok", "mu": mu, "tolerance": args.tolerance, "seed": args.seed, "n": inst.n, "m": inst.m})
    _emit(report)
    return EXIT_OK


def cmd_payments(args) -> int:
    return cmd_run(args, payments_only=True)


def _verify_one(job):
    inst, label, tolerance, trials, seed = job
    return verify_instance(inst, SolveConfig(epsilon=tolerance), trials=trials, seed=seed, label=label)


def cmd_verify(args) -> int:
    if args.corpus is not None:
        cseed, count = args.corpus
        if count < 0:
            raise InputError("corpus count must be non-negative")
        insts = corpus(cseed, count, family=args.family)
        labels = [f"corpus[{cseed}]#{k}" for k in range(count)]
    elif args.instance:
        insts = [load(args.instance)]
        labels = [os.path.basename(args.instance)]
    else:
        raise InputError("give an instance file or --corpus SEED COUNT")
    jobs = [(inst, label, args.tolerance, args.trials, args.seed) for inst, label in zip(insts, labels)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_verify_one, jobs))  # map keeps input order
    else:
        reports = [_verify_one(j) for j in jobs]
    if args.format == "csv":
        _csv(VERIFY_HEADER, [
            [r.label, repr(r.opt_welfare), repr(r.mech_expected_welfare), repr(r.ratio), r.concavity_violations,
             r.passed] for r in reports
        ])
    else:
        for r in reports:
            d = r.to_json()
            if r.non_mrs:
                d["findings"] = ["non-MRS valuation"] + (["non-concave objective"] if r.concavity_violations else [])
            _emit(d)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


# ------------------------------------------------------------ parser


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cal", description="Truthful combinatorial auctions via convex rounding.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded random instance")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=_positive_int, default=2)
    g.add_argument("--m", type=_positive_int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_gen)

    def common(q):
        q.add_argument("--tolerance", type=_positive_float, default=1e-4, help="relative solver accuracy epsilon")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--format", choices=("json", "csv"), default="json")

    for name, func, helptext in (("run", cmd_run, "run the mechanism on an instance"),
                                 ("payments", cmd_payments, "expected and sampled VCG payments")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("instance")
        common(r)
        r.add_argument("--mu", type=float, default=None,
                       help="cancellation probability (default 0, or 1e-6 with --adaptive)")
        r.add_argument("--samples", type=_positive_int, default=10000)
        r.add_argument("--max-iters", type=_positive_int, default=20000, help="solver iteration budget")
        r.add_argument("--allow-non-mrs", action="store_true")
        if name == "run":
            r.add_argument("--adaptive", action="store_true", help="sample with adaptive precision instead")
        r.set_defaults(func=func)

    v = sub.add_parser("verify", help="brute-force and property checks")
    v.add_argument("instance", nargs="?")
    v.add_argument("--corpus", nargs=2, type=int, metavar=("SEED", "COUNT"))
    v.add_argument("--family", choices=("coverage", "mrs", "mixed"), default="mrs")
    v.add_argument("--trials", type=_positive_int, default=100, help="midpoint-concavity segments per instance")
    v.add_argument("--jobs", type=_positive_int, default=1)
    common(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CAL_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"cal: capacity guard: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        print(f"cal: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (InputError, ValueError, OSError) as exc:
        print(f"cal: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
