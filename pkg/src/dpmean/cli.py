"""Command-line interface.

Subcommands: estimate (one dataset file -> one report), sweep (experiment
grid -> CSV), tailbench (tail-bound verification -> CSV), lemma-checks, and
selftest.  Exit codes: 0 success, 2 validation/usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import esthd_approx, esthd_pure, est1d, tailbounds
from .core import (
    ClipBall,
    ConfigurationError,
    EstimationFailedError,
    ParameterError,
    PersonDataset,
    PrivacyBudget,
    ProblemParams,
    SyntheticSpec,
    sample_dataset,
)
from .clipping import clip_ball, trunc_1d
from .harness import ESTIMATORS, ExperimentConfig, TailbenchConfig, run_experiment, run_tailbench
from .mechanisms import BudgetLedger, HistogramSpec, private_histogram

__all__ = ["main", "read_dataset_csv", "selftest"]


class DatasetFormatError(ValueError):
    """Malformed dataset CSV; message carries the offending line number."""


def read_dataset_csv(path: str) -> PersonDataset:
    """Parse the dataset interchange format.

    Header ``person_id,sample_id,x1,...,xd``; every person must carry the
    same number of samples.  Samples are ordered by sample_id within person;
    people by first appearance.
    """
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty dataset file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["person_id", "sample_id"] or len(header) < 3:
        raise DatasetFormatError("line 1: header must be person_id,sample_id,x1,...,xd")
    for i, name in enumerate(header[2:], start=1):
        if name != f"x{i}":
            raise DatasetFormatError(f"line 1: expected column x{i}, found {name!r}")
    d = len(header) - 2
    people: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise DatasetFormatError(
                f"line {lineno}: expected {len(header)} fields, found {len(fields)}"
            )
        person, sample = fields[0].strip(), fields[1].strip()
        try:
            xs = [float(v) for v in fields[2:]]
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: non-numeric sample value") from None
        people.setdefault(person, []).append((sample, xs))
    if not people:
        raise DatasetFormatError("line 2: no data rows")
    counts = {len(v) for v in people.values()}
    if len(counts) != 1:
        raise DatasetFormatError(
            f"line {len(lines)}: people have unequal sample counts {sorted(counts)}"
        )

    def sample_key(item):
        key = item[0]
        return (0, float(key)) if key.replace(".", "", 1).lstrip("-").isdigit() else (1, key)

    tensor = [
        [xs for _, xs in sorted(rows, key=sample_key)] for rows in people.values()
    ]
    return PersonDataset(np.asarray(tensor, dtype=np.float64).reshape(len(people), counts.pop(), d))


def _run_estimate(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    overrides = {
        "estimator": args.estimator,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "k": args.k,
        "alpha": args.alpha,
        "beta": args.beta,
        "range_R": args.range_R,
        "seed": args.seed,
    }
    cfg.update({key: val for key, val in overrides.items() if val is not None})
    for required in ("estimator", "epsilon", "k", "alpha", "seed"):
        if cfg.get(required) is None:
            raise ConfigurationError(f"estimate config missing {required!r}")
    if cfg["estimator"] not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {cfg['estimator']!r}")

    data = read_dataset_csv(args.data)
    params = ProblemParams(
        k=float(cfg["k"]),
        alpha=float(cfg["alpha"]),
        beta=float(cfg.get("beta", 0.1)),
        range_R=float(cfg.get("range_R", 2.0)),
    )
    seed = int(cfg["seed"])
    delta = float(cfg.get("delta", 0.0) or 0.0)
    if cfg["estimator"] == "est1d":
        report = est1d.estimate_mean_1d(data, PrivacyBudget(float(cfg["epsilon"]), delta), params, seed)
    elif cfg["estimator"] == "hd_single":
        report = esthd_approx.estimate_single_round(
            data, PrivacyBudget(float(cfg["epsilon"]), delta), params, seed
        )
    elif cfg["estimator"] == "hd_two_round":
        report = esthd_approx.estimate_two_round(
            data, PrivacyBudget(float(cfg["epsilon"]), delta), params, seed
        )
    else:
        report = esthd_pure.estimate_pure_full(data, params, float(cfg["epsilon"]), seed)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _run_sweep(args) -> int:
    with open(args.config) as fh:
        config = ExperimentConfig.from_json(fh.read())
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.output_path = args.out
    path = run_experiment(config, threads=args.threads)
    print(f"wrote {path}")
    return 0


def _run_tailbench(args) -> int:
    with open(args.config) as fh:
        config = TailbenchConfig.from_json(fh.read())
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.output_path = args.out
    path = run_tailbench(config, threads=args.threads)
    print(f"wrote {path}")
    return 0


def _run_lemma_checks(args) -> int:
    report = tailbounds.lemma_checks(args.seed if args.seed is not None else 7)
    print(report.summary())
    return 0 if report.passed else 1


def selftest(verbose: bool = True) -> int:
    """Quick battery of the deterministic contract examples (exit-code style)."""
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - report, don't crash
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def _trunc():
        assert trunc_1d(0.5, -1, 1) == 0.5
        assert trunc_1d(2.0, -1, 1) == 1.0
        assert trunc_1d(-5.0, 0, 2) == 0.0

    def _clip():
        out = clip_ball(np.array([3.0, 4.0]), ClipBall(np.zeros(2), 1.0))
        assert np.allclose(out, [0.6, 0.8])
        assert np.allclose(clip_ball(np.array([5.0, 5.0]), ClipBall(np.ones(2), 0.0)), [1.0, 1.0])

    def _sampling():
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0,), k=4.0)
        a = sample_dataset(spec, 2, 3, 7)
        b = sample_dataset(spec, 2, 3, 7)
        assert a.values.shape == (2, 3, 1)
        assert np.array_equal(a.values, b.values)

    def _histogram():
        spec = HistogramSpec.build(1.0, 1.0)
        hist = private_histogram([0.1, 0.2, 1.5], spec, PrivacyBudget(1e9, 0.0), seed=3)
        idx0 = spec.bucket_index(np.array([0.1]))[0]
        assert round(hist.counts[idx0]) == 2

    def _ledger():
        ledger = BudgetLedger()
        ledger.add(0.5)
        ledger.add(0.5)
        assert ledger.total() == (1.0, 0.0)
        assert BudgetLedger().total() == (0.0, 0.0)

    def _est1d_zero_noise():
        spec = SyntheticSpec("scaled_gaussian", mean=(0.4,), k=4.0)
        data = sample_dataset(spec, 64, 100, 11)
        params = ProblemParams(k=4.0, alpha=0.5, beta=0.1, range_R=2.0)
        report = est1d.estimate_mean_1d(data, PrivacyBudget(1e8, 0.0), params, 5)
        assert abs(report.estimate[0] - 0.4) < 0.2

    def _bounds():
        q = tailbounds.TailBoundQuery(m=100, k=3.0, t=0.5)
        assert abs(tailbounds.bound_berry_esseen(q).value - 8e-4) < 1e-12
        assert tailbounds.bound_markov(3.0, 2.0) == 0.125

    check("trunc_1d clamps", _trunc)
    check("clip_ball projects", _clip)
    check("sampling deterministic", _sampling)
    check("histogram noiseless limit", _histogram)
    check("ledger totals", _ledger)
    check("est1d near-noiseless recovery", _est1d_zero_noise)
    check("bound evaluators", _bounds)

    failed = [c for c in checks if not c[1]]
    if verbose:
        for name, ok, detail in checks:
            print(f"[{'ok' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        print(f"selftest: {len(checks) - len(failed)}/{len(checks)} passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmean", description="Person-level DP mean estimation toolkit"
    )
    sub = parser.add_subparsers(dest="command")

    p_est = sub.add_parser("estimate", help="estimate the mean of a dataset CSV")
    p_est.add_argument("--data", required=True, help="dataset CSV (person_id,sample_id,x1..xd)")
    p_est.add_argument("--config", help="JSON config with estimator settings")
    p_est.add_argument("--estimator", choices=ESTIMATORS)
    p_est.add_argument("--epsilon", type=float)
    p_est.add_argument("--delta", type=float)
    p_est.add_argument("--k", type=float)
    p_est.add_argument("--alpha", type=float)
    p_est.add_argument("--beta", type=float)
    p_est.add_argument("--range-R", dest="range_R", type=float)
    p_est.add_argument("--seed", type=int)
    p_est.add_argument("--out")

    for name, help_text in (
        ("sweep", "run an experiment grid from a JSON config"),
        ("tailbench", "run tail-bound verification from a JSON config"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int)

    p_lemma = sub.add_parser("lemma-checks", help="run the lemma verification battery")
    p_lemma.add_argument("--seed", type=int)

    sub.add_parser("selftest", help="run the quick deterministic self test")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage()
        return 2
    try:
        if args.command == "estimate":
            return _run_estimate(args)
        if args.command == "sweep":
            return _run_sweep(args)
        if args.command == "tailbench":
            return _run_tailbench(args)
        if args.command == "lemma-checks":
            return _run_lemma_checks(args)
        return selftest()
    except (ConfigurationError, ParameterError, DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationFailedError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
