"""Experiment runner: seeded sweeps over (n, m, d, k, epsilon, delta, alpha)
grids, repeated trials, and CSV emission for both estimators and tail-bound
verification.

Per-trial seeds derive from (config seed, grid-point hash, trial index), so
row contents never depend on execution order.  Rows are written atomically as
tasks complete; with threads = 1 (the default) the file itself is
byte-identical across reruns except for the wall_time_ms column.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import esthd_approx, esthd_pure, est1d, tailbounds
from .core import (
    ConfigurationError,
    EstimationFailedError,
    PrivacyBudget,
    ProblemParams,
    Seed,
    SyntheticSpec,
    derive_seed,
    sample_dataset,
    stable_hash,
)

__all__ = [
    "CSV_SCHEMA_VERSION",
    "ExperimentConfig",
    "TrialRow",
    "run_experiment",
    "TailbenchConfig",
    "run_tailbench",
    "resolve_threads",
]

CSV_SCHEMA_VERSION = "1"

ESTIMATORS = ("est1d", "hd_single", "hd_two_round", "pure_dp")


def resolve_threads(requested: int | None) -> int:
    """Thread count: explicit argument, else DPMEAN_THREADS, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("DPMEAN_THREADS")
    return max(1, int(env)) if env else 1


def _vec(x) -> str:
    return ";".join(repr(float(v)) for v in np.atleast_1d(x))


@dataclass
class ExperimentConfig:
    """One estimator sweep: a parameter grid, a trial count, and a seed."""

    estimator: str
    spec: SyntheticSpec
    n: list
    m: list
    epsilon: list
    delta: list
    alpha: list
    k: list
    trials: int
    seed: Seed
    output_path: str
    d: list = field(default_factory=list)
    beta: float = 0.1
    range_R: float = 2.0

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.d:
            self.d = [self.spec.dim]
        if any(dv != self.spec.dim for dv in self.d):
            raise ConfigurationError("grid d must match the spec dimension")
        if self.estimator == "pure_dp" and any(dv > 0 for dv in self.delta):
            raise ConfigurationError("pure_dp requires delta = 0 everywhere in the grid")
        if self.estimator in ("hd_single", "hd_two_round") and any(dv <= 0 for dv in self.delta):
            raise ConfigurationError(f"{self.estimator} requires delta > 0")
        if self.estimator == "est1d" and self.spec.dim != 1:
            raise ConfigurationError("est1d requires a univariate spec")

    def grid_points(self) -> list:
        return [
            {"n": nv, "m": mv, "d": dv, "epsilon": ev, "delta": dlv, "alpha": av, "k": kv}
            for nv, mv, dv, ev, dlv, av, kv in itertools.product(
                self.n, self.m, self.d, self.epsilon, self.delta, self.alpha, self.k
            )
        ]

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        try:
            spec = SyntheticSpec(
                family=raw["spec"]["family"],
                mean=None if raw["spec"].get("mean") is None else tuple(raw["spec"]["mean"]),
                k=float(raw["spec"].get("k", 4.0)),
                extra=dict(raw["spec"].get("extra", {})),
            )
            return cls(
                estimator=raw["estimator"],
                spec=spec,
                n=[int(v) for v in raw["n"]],
                m=[int(v) for v in raw["m"]],
                epsilon=[float(v) for v in raw["epsilon"]],
                delta=[float(v) for v in raw["delta"]],
                alpha=[float(v) for v in raw["alpha"]],
                k=[float(v) for v in raw["k"]],
                trials=int(raw["trials"]),
                seed=int(raw["seed"]),
                output_path=raw["output_path"],
                d=[int(v) for v in raw.get("d", [])],
                beta=float(raw.get("beta", 0.1)),
                range_R=float(raw.get("range_R", 2.0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"experiment config missing key {exc}") from exc


# One row per (grid point, trial); summaries reuse the schema with
# row_type = "summary" and the aggregate columns filled.
TrialRow = [
    "schema_version",
    "row_type",
    "estimator",
    "family",
    "n",
    "m",
    "d",
    "epsilon",
    "delta",
    "alpha",
    "k",
    "trial",
    "trial_seed",
    "estimate",
    "l2_error",
    "rho",
    "rho1",
    "rho2",
    "mu_coarse",
    "median_error",
    "success_rate",
    "wall_time_ms",
]


def _run_one(config: ExperimentConfig, point: dict, trial: int) -> dict:
    trial_seed = derive_seed(config.seed, stable_hash(point), trial)
    spec = SyntheticSpec(
        family=config.spec.family, mean=config.spec.mean, k=point["k"], extra=config.spec.extra
    )
    data = sample_dataset(spec, point["n"], point["m"], derive_seed(trial_seed, 0))
    params = ProblemParams(
        k=point["k"], alpha=point["alpha"], beta=config.beta, range_R=config.range_R
    )
    est_seed = derive_seed(trial_seed, 1)
    try:
        if config.estimator == "est1d":
            budget = PrivacyBudget(point["epsilon"], point["delta"])
            report = est1d.estimate_mean_1d(data, budget, params, est_seed)
        elif config.estimator == "hd_single":
            budget = PrivacyBudget(point["epsilon"], point["delta"])
            report = esthd_approx.estimate_single_round(data, budget, params, est_seed)
        elif config.estimator == "hd_two_round":
            budget = PrivacyBudget(point["epsilon"], point["delta"])
            report = esthd_approx.estimate_two_round(data, budget, params, est_seed)
        else:
            report = esthd_pure.estimate_pure_full(data, params, point["epsilon"], est_seed)
    except EstimationFailedError:
        # A legitimate outcome at small n (e.g. all stability-histogram
        # buckets suppressed): record an infinite-error trial.
        row = {key: "" for key in TrialRow}
        row.update(
            schema_version=CSV_SCHEMA_VERSION,
            row_type="trial",
            estimator=config.estimator,
            family=spec.family,
            n=point["n"],
            m=point["m"],
            d=point["d"],
            epsilon=repr(point["epsilon"]),
            delta=repr(point["delta"]),
            alpha=repr(point["alpha"]),
            k=repr(point["k"]),
            trial=trial,
            trial_seed=trial_seed,
            l2_error=repr(math.inf),
            wall_time_ms="0.000",
        )
        return row
    error = float(np.linalg.norm(report.estimate - spec.mean_vector()))
    row = {key: "" for key in TrialRow}
    row.update(
        schema_version=CSV_SCHEMA_VERSION,
        row_type="trial",
        estimator=config.estimator,
        family=spec.family,
        n=point["n"],
        m=point["m"],
        d=point["d"],
        epsilon=repr(point["epsilon"]),
        delta=repr(point["delta"]),
        alpha=repr(point["alpha"]),
        k=repr(point["k"]),
        trial=trial,
        trial_seed=trial_seed,
        estimate=_vec(report.estimate),
        l2_error=repr(error),
        rho=repr(report.params["rho"]) if "rho" in report.params else "",
        rho1=repr(report.params["rho1"]) if "rho1" in report.params else "",
        rho2=repr(report.params["rho2"]) if "rho2" in report.params else "",
        mu_coarse=_vec(report.params["mu_coarse"]) if "mu_coarse" in report.params else "",
        wall_time_ms=f"{report.wall_time_ms:.3f}",
    )
    return row


def _summary_row(config: ExperimentConfig, point: dict, errors: list) -> dict:
    row = {key: "" for key in TrialRow}
    success = sum(1 for e in errors if e <= point["alpha"]) / len(errors)
    row.update(
        schema_version=CSV_SCHEMA_VERSION,
        row_type="summary",
        estimator=config.estimator,
        family=config.spec.family,
        n=point["n"],
        m=point["m"],
        d=point["d"],
        epsilon=repr(point["epsilon"]),
        delta=repr(point["delta"]),
        alpha=repr(point["alpha"]),
        k=repr(point["k"]),
        median_error=repr(float(np.median(errors))),
        success_rate=repr(success),
    )
    return row


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> str:
    """Run the full grid x trials cross product and write the CSV.

    Returns the output path.  A summary row (median error, success@alpha)
    follows each grid point's trials.
    """
    workers = resolve_threads(threads)
    points = config.grid_points()
    lock = threading.Lock()
    with open(config.output_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TrialRow, lineterminator="\n")
        writer.writeheader()

        def emit(row):
            with lock:
                writer.writerow(row)
                fh.flush()

        if workers == 1:
            for point in points:
                errors = []
                for trial in range(config.trials):
                    row = _run_one(config, point, trial)
                    errors.append(float(row["l2_error"]))
                    emit(row)
                emit(_summary_row(config, point, errors))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                pending = {
                    id(point): {"point": point, "errors": [], "left": config.trials}
                    for point in points
                }

                def task(point, trial):
                    row = _run_one(config, point, trial)
                    emit(row)
                    state = pending[id(point)]
                    with lock:
                        state["errors"].append(float(row["l2_error"]))
                        state["left"] -= 1
                        done = state["left"] == 0
                    if done:
                        emit(_summary_row(config, point, state["errors"]))

                futures = [
                    pool.submit(task, point, trial)
                    for point in points
                    for trial in range(config.trials)
                ]
                for fut in futures:
                    fut.result()
    return config.output_path


@dataclass
class TailbenchConfig:
    """Tail-bound verification sweep: families x (m, k, d) x bound names."""

    specs: list  # SyntheticSpec per family instance
    m: list
    bounds: list  # subset of {heavytail, berry_esseen, highd}
    trials: int
    seed: Seed
    output_path: str
    grid_points_per_window: int = 12

    def __post_init__(self):
        for b in self.bounds:
            if b not in ("heavytail", "berry_esseen", "highd"):
                raise ConfigurationError(f"unknown bound {b!r}")
        if self.trials < 100_000:
            raise ConfigurationError("tailbench needs trials >= 1e5")

    @classmethod
    def from_json(cls, text: str) -> "TailbenchConfig":
        raw = json.loads(text)
        try:
            specs = [SyntheticSpec.from_json(json.dumps(s)) for s in raw["specs"]]
            return cls(
                specs=specs,
                m=[int(v) for v in raw["m"]],
                bounds=list(raw["bounds"]),
                trials=int(raw["trials"]),
                seed=int(raw["seed"]),
                output_path=raw["output_path"],
                grid_points_per_window=int(raw.get("grid_points_per_window", 12)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"tailbench config missing key {exc}") from exc


TAILBENCH_COLUMNS = [
    "schema_version",
    "family",
    "m",
    "k",
    "d",
    "t",
    "empirical",
    "stderr",
    "bound_name",
    "bound_value",
    "C_cal",
    "valid_window",
    "pass",
]


def run_tailbench(config: TailbenchConfig, threads: int | None = None) -> str:
    """Evaluate empirical tails against calibrated bounds over the sweep.

    One Monte Carlo sample batch per (spec, m, mode) is reused across the
    bound's whole t-grid.  Out-of-window t values are flagged in the
    valid_window column, never dropped.  "pass" is the domination check
    empirical + 3 stderr <= bound.
    """
    rows = []
    for spec, m, bound_name in itertools.product(config.specs, config.m, config.bounds):
        d = spec.dim
        if bound_name in ("heavytail", "berry_esseen") and d != 1:
            continue
        if bound_name == "highd" and d == 1:
            continue
        if bound_name == "heavytail" and spec.k < 3:
            continue
        c_cal = tailbounds.FROZEN_CALIBRATION.get((spec.family, bound_name), 1.0)
        grid = tailbounds.acceptance_t_grid(
            bound_name, m, spec.k, d, config.grid_points_per_window
        )
        mode = "one_sided" if d == 1 else "norm"
        run_seed = derive_seed(config.seed, stable_hash([spec.to_json(), m, bound_name]))
        tail = tailbounds.mc_tail(spec, m, d, grid, config.trials, run_seed, mode=mode)
        evaluator = tailbounds._BOUNDS[bound_name]
        for point in tail:
            q = tailbounds.TailBoundQuery(m=m, k=spec.k, t=point.t, d=d, constant=c_cal)
            bv = evaluator(q)
            ok = point.empirical + 3 * point.std_error <= bv.value
            rows.append(
                {
                    "schema_version": CSV_SCHEMA_VERSION,
                    "family": spec.family,
                    "m": m,
                    "k": repr(spec.k),
                    "d": d,
                    "t": repr(point.t),
                    "empirical": repr(point.empirical),
                    "stderr": repr(point.std_error),
                    "bound_name": bound_name,
                    "bound_value": repr(bv.value),
                    "C_cal": repr(c_cal),
                    "valid_window": int(bv.valid),
                    "pass": int(ok),
                }
            )
    with open(config.output_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TAILBENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return config.output_path
