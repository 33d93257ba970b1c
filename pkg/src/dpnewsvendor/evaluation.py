"""Estimation-error metrics, Monte-Carlo regret, and the replication harness.

``run_replications`` repeats a generate -> fit -> evaluate cycle with
independent seeds and reports, per estimator, the L2 and whitened
estimation errors, the regret against the clairvoyant policy on a large
held-out evaluation set, and the out-of-sample cost.

Seeding is splittable and documented: replication ``r`` derives its
streams from ``SeedSequence((base_seed, r, k))`` where ``k = 0`` is the
training data and ``k = 1 + j`` the noise of the j-th privacy level.
The shared evaluation set uses ``(base_seed, 0, 0)``; replication ids
start at 1.  Rows are therefore a prefix-stable function of the base
seed: increasing R never changes earlier rows.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import optimizer
from .data import (
    ErrorDist,
    SyntheticSpec,
    Whitener,
    generate_synthetic,
    true_beta_star,
    whitener_from,
)
from .errors import DimensionMismatch
from .model import Dataset, Problem, coefficients, newsvendor_cost
from .optimizer import HyperParams, default_bandwidth
from .privacy import calibrate_sigma

ROW_FIELDS = (
    "rep_id",
    "n",
    "mu_label",
    "tau",
    "dist_label",
    "l2_error",
    "sigma_error",
    "regret",
    "oos_cost",
)

METRICS = ("l2_error", "sigma_error", "regret", "oos_cost")


def estimation_error(beta, beta_star, whitener: Whitener | None = None) -> float:
    """L2 distance, or the quadratic-form distance induced by a whitener."""
    beta = coefficients(beta)
    beta_star = coefficients(beta_star)
    if beta.shape != beta_star.shape:
        raise DimensionMismatch(
            f"coefficient vectors of lengths {len(beta)} and {len(beta_star)}"
        )
    delta = beta - beta_star
    if whitener is None:
        return float(np.linalg.norm(delta))
    if whitener.p != len(delta):
        raise DimensionMismatch(
            f"whitener is {whitener.p}-dimensional, coefficients are {len(delta)}"
        )
    return float(np.sqrt(delta @ whitener.sigma_matrix @ delta))


def out_of_sample_cost(problem: Problem, policy, test_data: Dataset) -> float:
    """Average newsvendor cost of the policy on held-out data."""
    beta = coefficients(policy)
    if len(beta) != test_data.p:
        raise DimensionMismatch(
            f"policy has {len(beta)} coefficients but data has {test_data.p} features"
        )
    orders = test_data.features @ beta
    return float(np.mean(newsvendor_cost(problem, orders, test_data.demands)))


def regret(problem: Problem, policy, beta_star, eval_data: Dataset) -> float:
    """Mean cost of the policy minus mean cost of the clairvoyant policy."""
    return out_of_sample_cost(problem, policy, eval_data) - out_of_sample_cost(
        problem, beta_star, eval_data
    )


@dataclass(frozen=True)
class ReplicationRow:
    rep_id: int
    n: int
    mu_label: str
    tau: float
    dist_label: str
    l2_error: float
    sigma_error: float
    regret: float
    oos_cost: float


@dataclass(frozen=True)
class AggregateCell:
    n: int
    mu_label: str
    tau: float
    dist_label: str
    metric: str
    mean: float
    std: float


@dataclass(frozen=True)
class ReplicationConfig:
    """One experiment cell: a data law, a problem, and a privacy grid.

    ``mu_grid`` entries are GDP levels; ``None`` denotes the non-private
    smoothed-ERM baseline.  ``bandwidth=None`` resolves to the
    rule-of-thumb value, ``step_size=None`` to the per-iteration line
    search.
    """

    problem: Problem
    error_dist: ErrorDist
    n: int
    theta_star: tuple[float, ...]
    covariance: np.ndarray
    mu_grid: tuple[float | None, ...] = (None, 0.9, 0.5, 0.3)
    n_steps: int = 10
    clip_radius: float = 2.0
    kernel: str = "gaussian"
    bandwidth: float | None = None
    step_size: float | None = None
    max_step_size: float = 4.0
    mode: str = "known_sigma_matrix"
    round_up_sigma: bool = True
    eval_n: int = 1_000_000
    base_seed: int = 0

    def resolved_bandwidth(self) -> float:
        if self.bandwidth is not None:
            return self.bandwidth
        return default_bandwidth(self.problem.tau, self.n, len(self.theta_star))

    def mu_label(self, mu: float | None) -> str:
        return "nonprivate" if mu is None else f"mu={mu:g}"


@dataclass(frozen=True, eq=False)
class ReplicationReport:
    rows: tuple[ReplicationRow, ...]
    aggregates: tuple[AggregateCell, ...]


class ReplicationError(RuntimeError):
    """Wraps a failure inside one replication with its id."""

    def __init__(self, rep_id: int, cause: BaseException):
        self.rep_id = rep_id
        super().__init__(f"replication {rep_id} failed: {cause!r}")


def derive_seed(base_seed: int, rep_id: int, stream: int) -> int:
    """Hash (base_seed, rep_id, stream) into one integer seed."""
    ss = np.random.SeedSequence((int(base_seed), int(rep_id), int(stream)))
    return int(ss.generate_state(1, np.uint64)[0])


def _synthetic_spec(config: ReplicationConfig, n: int, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        theta_star=config.theta_star,
        covariance=config.covariance,
        error_dist=config.error_dist,
        n=n,
        seed=seed,
    )


def _one_replication(
    config: ReplicationConfig,
    rep_id: int,
    eval_data: Dataset,
    beta_star: np.ndarray,
    whitener: Whitener,
    clairvoyant_cost: float,
) -> list[ReplicationRow]:
    problem = config.problem
    bandwidth = config.resolved_bandwidth()
    tau_bar = max(problem.tau, 1.0 - problem.tau)
    spec = _synthetic_spec(config, config.n, derive_seed(config.base_seed, rep_id, 0))
    train = generate_synthetic(spec)

    rows = []
    for j, mu in enumerate(config.mu_grid):
        if mu is None:
            beta = optimizer.smoothed_erm(train, problem, config.kernel, bandwidth)
        else:
            hp = HyperParams(
                bandwidth=bandwidth,
                n_steps=config.n_steps,
                clip_radius=config.clip_radius,
                step_size=config.step_size,
                mu=mu,
                sigma=calibrate_sigma(
                    mu,
                    config.clip_radius,
                    config.n_steps,
                    tau_bar,
                    round_up=config.round_up_sigma,
                ),
                seed=derive_seed(config.base_seed, rep_id, 1 + j),
                kernel=config.kernel,
                mode=config.mode,
                max_step_size=config.max_step_size,
            )
            w = whitener if config.mode == "known_sigma_matrix" else None
            beta = optimizer.fit(train, problem, hp, whitener=w).beta_final
        oos = out_of_sample_cost(problem, beta, eval_data)
        rows.append(
            ReplicationRow(
                rep_id=rep_id,
                n=config.n,
                mu_label=config.mu_label(mu),
                tau=problem.tau,
                dist_label=config.error_dist.label,
                l2_error=estimation_error(beta, beta_star),
                sigma_error=estimation_error(beta, beta_star, whitener),
                regret=oos - clairvoyant_cost,
                oos_cost=oos,
            )
        )
    return rows


def aggregate_rows(rows) -> tuple[AggregateCell, ...]:
    """Group rows by configuration cell and compute mean/std per metric.

    Standard deviations use ddof=1 (0.0 for singleton groups).
    """
    groups: dict[tuple, list[ReplicationRow]] = {}
    order: list[tuple] = []
    for row in rows:
        key = (row.n, row.mu_label, row.tau, row.dist_label)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    cells = []
    for key in order:
        members = groups[key]
        for metric in METRICS:
            vals = np.array([getattr(r, metric) for r in members])
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            cells.append(
                AggregateCell(
                    n=key[0],
                    mu_label=key[1],
                    tau=key[2],
                    dist_label=key[3],
                    metric=metric,
                    mean=float(np.mean(vals)),
                    std=std,
                )
            )
    return tuple(cells)


def run_replications(config: ReplicationConfig, R: int, jobs: int = 1) -> ReplicationReport:
    """Run R independent replications of the experiment cell.

    Deterministic given ``config.base_seed``; replications may run
    concurrently but rows are always assembled in rep_id order.
    """
    if not R >= 1:
        raise ValueError(f"R must be >= 1, got {R}")
    eval_spec = _synthetic_spec(config, config.eval_n, derive_seed(config.base_seed, 0, 0))
    eval_data = generate_synthetic(eval_spec)
    beta_star = true_beta_star(eval_spec, config.problem.tau)
    whitener = whitener_from(eval_spec)
    clairvoyant_cost = out_of_sample_cost(config.problem, beta_star, eval_data)

    def job(rep_id: int) -> list[ReplicationRow]:
        try:
            return _one_replication(
                config, rep_id, eval_data, beta_star, whitener, clairvoyant_cost
            )
        except Exception as exc:
            raise ReplicationError(rep_id, exc) from exc

    rep_ids = range(1, R + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(job, rep_ids))
    else:
        per_rep = [job(r) for r in rep_ids]

    rows = tuple(row for chunk in per_rep for row in chunk)
    return ReplicationReport(rows=rows, aggregates=aggregate_rows(rows))


def sweep(config: ReplicationConfig, ns, R: int, jobs: int = 1) -> ReplicationReport:
    """Run the cell at several sample sizes and concatenate the reports."""
    rows = []
    for n in ns:
        report = run_replications(replace(config, n=int(n)), R, jobs=jobs)
        rows.extend(report.rows)
    rows = tuple(rows)
    return ReplicationReport(rows=rows, aggregates=aggregate_rows(rows))


def write_rows_csv(report: ReplicationReport, path) -> None:
    """Long-format CSV, one row per replication per estimator."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROW_FIELDS)
        for row in report.rows:
            writer.writerow([repr(getattr(row, f)) if isinstance(getattr(row, f), float) else getattr(row, f) for f in ROW_FIELDS])


def write_aggregates_csv(report: ReplicationReport, path) -> None:
    """Wide-format CSV: one estimator column per privacy level.

    Rows come in (mean, std) pairs per (dist, tau, n, metric) group,
    mirroring the usual results-table layout.
    """
    labels: list[str] = []
    for cell in report.aggregates:
        if cell.mu_label not in labels:
            labels.append(cell.mu_label)
    keyed = {}
    order = []
    for cell in report.aggregates:
        key = (cell.dist_label, cell.tau, cell.n, cell.metric)
        if key not in keyed:
            keyed[key] = {}
            order.append(key)
        keyed[key][cell.mu_label] = cell
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dist", "tau", "n", "metric", "stat", *labels])
        for key in order:
            dist, tau, n, metric = key
            cells = keyed[key]
            for stat in ("mean", "std"):
                writer.writerow(
                    [dist, repr(tau), n, metric, stat]
                    + [
                        repr(getattr(cells[label], stat)) if label in cells else ""
                        for label in labels
                    ]
                )
