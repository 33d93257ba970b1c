"""Acceptance suite: one test per release criterion.

Each test prints a PASS line after its assertions; run with ``-s`` to
see them, e.g. ``pytest tests/test_acceptance.py -v -s``.  The two
benchmark-scale criteria (Table-2 reproduction and the convergence
trend) dominate the runtime at a few minutes total.
"""

import math

import mpmath
import numpy as np
import pytest

from dpnewsvendor.cli import main as cli_main
from dpnewsvendor.data import (
    ErrorDist,
    ar1_covariance,
    default_spec,
    generate_synthetic,
    load_csv,
    train_test_split,
    whitener_from,
)
from dpnewsvendor.evaluation import (
    ReplicationConfig,
    estimation_error,
    out_of_sample_cost,
    run_replications,
    sweep,
)
from dpnewsvendor.kernels import KERNEL_NAMES, check_loss, constants, smoothed_check_loss
from dpnewsvendor.model import Dataset, Problem, smoothed_empirical_cost, smoothed_gradient
from dpnewsvendor.optimizer import (
    HyperParams,
    default_bandwidth,
    fit,
    noisy_step,
    smoothed_erm,
)
from dpnewsvendor.privacy import calibrate_sigma, compose_gdp, gdp_to_eps_delta, gdp_tradeoff

from conftest import finite_difference_gradient
from surrogate import restaurant_surrogate, write_surrogate_csv

THETA = (1.5, 1.0, -2.5, -1.5, 3.0)


def _report(name: str):
    print(f"\nACCEPTANCE PASS: {name}")


def test_criterion_01_privacy_calibration():
    assert calibrate_sigma(0.5, 2, 10, 0.5, round_up=True) == 13
    assert calibrate_sigma(0.5, 2, 10, 0.75, round_up=True) == 19
    _report("#1 noise calibration reproduces sigma=13 and sigma=19")


def test_criterion_02_one_step_sensitivity():
    n, p = 50, 5
    eta, radius = 0.8, 2.0
    problem = Problem.from_quantile(0.3)
    tau_bar = max(problem.tau, 1 - problem.tau)
    bound = 2 * tau_bar * radius * eta / n
    spec = default_spec(n, "normal", seed=0)
    whitener = whitener_from(spec)
    hp = HyperParams(
        bandwidth=0.2,
        n_steps=1,
        clip_radius=radius,
        step_size=eta,
        sigma=20.0,
        mode="known_sigma_matrix",
    )
    rng = np.random.default_rng(2024)
    for pair in range(200):
        base = generate_synthetic(
            default_spec(n, "normal", seed=10_000 + pair)
        )
        d2 = base.demands.copy()
        x2 = base.features.copy()
        i = rng.integers(n)
        d2[i] = rng.normal(scale=8)
        x2[i, 1:] = rng.normal(scale=4, size=p - 1)
        neighbor = Dataset(demands=d2, features=x2)
        beta = rng.normal(size=p)
        g = rng.standard_normal(p)
        out_a = noisy_step(beta, base, problem, hp, g, whitener)
        out_b = noisy_step(beta, neighbor, problem, hp, g, whitener)
        dist = estimation_error(out_a, out_b, whitener)
        assert dist <= bound + 1e-12, (pair, dist, bound)
    _report("#2 one-step sensitivity bound holds on 200 neighboring pairs")


def test_criterion_03_sandwich_bound():
    grid = np.linspace(-10, 10, 2001)
    for kind in KERNEL_NAMES:
        half_gap = 0.5 * constants(kind).kappa_1
        for bandwidth in (0.1, 0.5, 1.0, 2.0):
            for tau in (0.1, 0.5, 0.9):
                base = check_loss(tau, grid)
                val = smoothed_check_loss(kind, grid, tau, bandwidth)
                assert np.all(val >= base - 1e-12)
                assert np.all(val <= base + half_gap * bandwidth + 1e-9)
    _report("#3 smoothed loss sandwiched within kappa_1*bandwidth/2 for all kernels")


def test_criterion_04_gradient_correctness():
    rng = np.random.default_rng(99)
    checked = 0
    for kind in KERNEL_NAMES:
        for _ in range(10):
            n, p = 30, 4
            x = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
            d = x @ rng.normal(size=p) + rng.standard_normal(n)
            data = Dataset(demands=d, features=x)
            problem = Problem(b=rng.uniform(0.5, 3), h=rng.uniform(0.5, 3))
            beta = rng.normal(size=p)
            bandwidth = 0.5

            def q(b):
                return smoothed_empirical_cost(
                    problem, data, b, kind, bandwidth
                ) / problem.total_cost

            fd = finite_difference_gradient(q, beta, h=3e-6)
            got = smoothed_gradient(problem, data, beta, kind, bandwidth)
            np.testing.assert_allclose(got, fd, rtol=1e-6, atol=1e-8)
            checked += 1
    assert checked == 50
    _report("#4 smoothed gradient matches finite differences on 50 instances")


def test_criterion_05_noise_free_reduction():
    data = generate_synthetic(default_spec(500, "normal", seed=314))
    problem = Problem.from_quantile(0.5)
    bandwidth = default_bandwidth(0.5, data.n, data.p)
    hp = HyperParams(bandwidth=bandwidth, n_steps=500, sigma=0.0, mode="raw_covariates")
    private_free = fit(data, problem, hp).beta_final
    baseline = smoothed_erm(data, problem, "gaussian", bandwidth)
    gap = float(np.linalg.norm(private_free - baseline))
    assert gap <= 1e-4, gap
    _report(f"#5 noise-free fit within {gap:.2e} of the smoothed ERM baseline")


@pytest.fixture(scope="module")
def table2_report():
    config = ReplicationConfig(
        problem=Problem.from_quantile(0.5),
        error_dist=ErrorDist.normal(),
        n=400,
        theta_star=THETA,
        covariance=ar1_covariance(4, 0.5),
        mu_grid=(None, 0.9, 0.5, 0.3),
        eval_n=1_000_000,
        base_seed=2027,
    )
    return run_replications(config, R=300)


def test_criterion_06_table2_reproduction(table2_report):
    means = {
        cell.mu_label: cell.mean
        for cell in table2_report.aggregates
        if cell.metric == "regret"
    }
    assert 0.001 <= means["nonprivate"] <= 0.010, means
    assert means["nonprivate"] < means["mu=0.9"] < means["mu=0.5"] < means["mu=0.3"], means
    assert 0.015 <= means["mu=0.3"] <= 0.08, means
    _report(
        "#6 benchmark regrets at n=400: "
        + ", ".join(f"{k}={v:.4f}" for k, v in means.items())
    )


def test_criterion_07_error_decreases_with_n():
    config = ReplicationConfig(
        problem=Problem.from_quantile(0.5),
        error_dist=ErrorDist.normal(),
        n=100,
        theta_star=THETA,
        covariance=ar1_covariance(4, 0.5),
        mu_grid=(None, 0.9, 0.5, 0.3),
        eval_n=20_000,
        base_seed=515,
    )
    ns = (100, 200, 300, 400, 500)
    report = sweep(config, ns, R=100)
    curves = {}
    for cell in report.aggregates:
        if cell.metric == "l2_error":
            curves.setdefault(cell.mu_label, {})[cell.n] = cell.mean
    for label, by_n in curves.items():
        series = [by_n[n] for n in ns]
        inversions = sum(b > a for a, b in zip(series, series[1:]))
        assert inversions <= 1, (label, series)
    _report(
        "#7 mean estimation error decreases in n for "
        + ", ".join(sorted(curves))
    )


def test_criterion_08_gdp_calculus():
    assert gdp_tradeoff(1.0, 0.5) == pytest.approx(float(mpmath.ncdf(-1)), abs=1e-10)
    for mu in (0.3, 0.5, 0.9):
        assert compose_gdp([mu / math.sqrt(10)] * 10) == pytest.approx(mu, abs=1e-12)
    want = float(mpmath.ncdf(-0.5) - mpmath.e * mpmath.ncdf(-1.5))
    assert gdp_to_eps_delta(1.0).delta == pytest.approx(want, abs=1e-10)
    _report("#8 GDP trade-off, composition and (eps, delta) conversion verified")


# regression locks for the frozen surrogate pipeline (computed once from
# this exact configuration and pinned; relative tolerance 1e-6)
SURROGATE_EXPECTED = {
    "nonprivate": 47.85331066084794,
    "mu=0.9": 47.939654184637035,
    "mu=0.5": 48.18025124703217,
    "mu=0.3": 48.92506383915511,
}


def test_criterion_09_surrogate_out_of_sample_costs(tmp_path):
    demand, _, _ = restaurant_surrogate()
    assert demand.shape == (736,)
    assert demand.sum() == pytest.approx(2646.3036144518, rel=1e-9)

    csv_path = tmp_path / "surrogate.csv"
    write_surrogate_csv(csv_path)
    data = load_csv(csv_path, "demand")
    assert (data.n, data.p) == (736, 6)

    problem = Problem(b=50, h=30)
    bandwidth = default_bandwidth(problem.tau, 552, data.p)
    tau_bar = max(problem.tau, 1 - problem.tau)
    sums = {label: 0.0 for label in SURROGATE_EXPECTED}
    n_splits = 100
    for split_id in range(n_splits):
        train, test = train_test_split(data, 552, seed=1000 + split_id)
        beta = smoothed_erm(train, problem, "gaussian", bandwidth, tol=1e-6)
        sums["nonprivate"] += out_of_sample_cost(problem, beta, test)
        for mu in (0.9, 0.5, 0.3):
            hp = HyperParams(
                bandwidth=bandwidth,
                n_steps=10,
                clip_radius=2.0,
                mu=mu,
                sigma=calibrate_sigma(mu, 2.0, 10, tau_bar, round_up=True),
                seed=5000 + split_id * 10 + int(mu * 10),
                mode="raw_covariates",
                max_step_size=2.0,
            )
            result = fit(train, problem, hp)
            assert result.certificate is not None
            sums[f"mu={mu}"] += out_of_sample_cost(problem, result.beta_final, test)
    means = {k: v / n_splits for k, v in sums.items()}

    for label, expected in SURROGATE_EXPECTED.items():
        assert means[label] == pytest.approx(expected, rel=1e-6), (label, means[label])
    base = means["nonprivate"]
    for label in ("mu=0.9", "mu=0.5", "mu=0.3"):
        excess = means[label] / base - 1.0
        assert excess <= 0.025, (label, excess)
    _report(
        "#9 surrogate pipeline locked; private cost excess "
        + ", ".join(
            f"{label}={means[label] / base - 1:+.3%}"
            for label in ("mu=0.9", "mu=0.5", "mu=0.3")
        )
    )


SMOKE_CONFIG = """\
[problem]
tau = 0.5

[data]
dist = normal
n = 100

[hyper]
T = 10
B = 2

[privacy]
mu = nonprivate, 0.5

[replication]
reps = 1
base_seed = 11
eval_n = 10000
"""


def test_criterion_10_bench_determinism(tmp_path):
    cfg = tmp_path / "smoke.ini"
    cfg.write_text(SMOKE_CONFIG)
    outputs = []
    for tag in ("first", "second"):
        rows = tmp_path / f"rows_{tag}.csv"
        agg = tmp_path / f"agg_{tag}.csv"
        code = cli_main(
            ["bench", "--config", str(cfg), "--rows", str(rows), "--aggregates", str(agg)]
        )
        assert code == 0
        outputs.append(rows.read_bytes())
    assert outputs[0] == outputs[1]
    _report("#10 repeated bench runs produce byte-identical row CSVs")
