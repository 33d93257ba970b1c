"""Synthetic demand generation, CSV ingestion, whitening, splitting.

The synthetic generator draws features ``z ~ N(0, covariance)``,
prepends an intercept, and sets ``d = x @ theta_star + eps`` with the
noise law chosen from three families: standard normal, Student t, and a
two-or-more component Gaussian mixture.  The clairvoyant coefficient
vector for a quantile level ``tau`` is ``theta_star`` with the noise
quantile added to the intercept.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr, ndtri, stdtr

from .errors import (
    InvalidCovariance,
    MissingColumn,
    NonNumericCell,
    SingularCovariance,
    SplitTooLarge,
)
from .model import Dataset

DEFAULT_THETA_STAR = (1.5, 1.0, -2.5, -1.5, 3.0)

_QUANTILE_BRACKET = 1e3
_QUANTILE_XTOL = 1e-10


def ar1_covariance(dim: int, rho: float = 0.5) -> np.ndarray:
    """Covariance matrix with entries rho^|j-k|."""
    idx = np.arange(dim)
    return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)


@dataclass(frozen=True)
class ErrorDist:
    """Law of the observation noise.

    One of ``normal`` (standard), ``student_t`` (with ``df`` degrees of
    freedom), or ``gaussian_mixture`` with component weights, means and
    variances.
    """

    kind: str
    df: float | None = None
    weights: tuple[float, ...] | None = None
    means: tuple[float, ...] | None = None
    variances: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "normal":
            pass
        elif self.kind == "student_t":
            if self.df is None or not self.df > 0:
                raise ValueError("student_t requires df > 0")
        elif self.kind == "gaussian_mixture":
            w = np.asarray(self.weights, dtype=float)
            m = np.asarray(self.means, dtype=float)
            v = np.asarray(self.variances, dtype=float)
            if not (len(w) == len(m) == len(v)) or len(w) == 0:
                raise ValueError("mixture components must have equal nonzero length")
            if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
                raise ValueError("mixture weights must be non-negative and sum to 1")
            if np.any(v <= 0):
                raise ValueError("mixture variances must be positive")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
            object.__setattr__(self, "means", tuple(float(x) for x in m))
            object.__setattr__(self, "variances", tuple(float(x) for x in v))
        else:
            raise ValueError(f"unknown error distribution kind {self.kind!r}")

    @classmethod
    def normal(cls) -> "ErrorDist":
        return cls(kind="normal")

    @classmethod
    def student_t(cls, df: float = 3.0) -> "ErrorDist":
        return cls(kind="student_t", df=float(df))

    @classmethod
    def gaussian_mixture(cls, weights, means, variances) -> "ErrorDist":
        return cls(
            kind="gaussian_mixture",
            weights=tuple(weights),
            means=tuple(means),
            variances=tuple(variances),
        )

    @classmethod
    def from_name(cls, name: str) -> "ErrorDist":
        """CLI names: ``normal``, ``t3``, ``mixture``."""
        if name == "normal":
            return cls.normal()
        if name == "t3":
            return cls.student_t(3.0)
        if name == "mixture":
            return cls.gaussian_mixture((0.9, 0.1), (0.0, 0.0), (1.0, 100.0))
        raise ValueError(f"unknown distribution name {name!r}; valid: normal, t3, mixture")

    @property
    def label(self) -> str:
        if self.kind == "normal":
            return "normal"
        if self.kind == "student_t":
            df = self.df
            return f"t{int(df)}" if float(df).is_integer() else f"t{df:g}"
        return "mixture"


def error_cdf(dist: ErrorDist, x):
    """CDF of the noise law; closed forms throughout."""
    x = np.asarray(x, dtype=float)
    if dist.kind == "normal":
        out = ndtr(x)
    elif dist.kind == "student_t":
        out = stdtr(dist.df, x)
    else:
        w = np.asarray(dist.weights)
        m = np.asarray(dist.means)
        s = np.sqrt(np.asarray(dist.variances))
        out = np.sum(w * ndtr((x[..., None] - m) / s), axis=-1)
    if out.ndim == 0:
        return float(out)
    return out


def error_quantile(dist: ErrorDist, tau: float) -> float:
    """Quantile of the noise law.

    Normal quantiles are closed form; Student t and mixtures are found
    by bisecting the CDF over [-1e3, 1e3] to 1e-10.
    """
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if dist.kind == "normal":
        return float(ndtri(tau))
    return float(
        optimize.bisect(
            lambda x: error_cdf(dist, x) - tau,
            -_QUANTILE_BRACKET,
            _QUANTILE_BRACKET,
            xtol=_QUANTILE_XTOL,
        )
    )


def sample_errors(dist: ErrorDist, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist.kind == "normal":
        return rng.standard_normal(n)
    if dist.kind == "student_t":
        return rng.standard_t(dist.df, size=n)
    comp = rng.choice(len(dist.weights), size=n, p=dist.weights)
    means = np.asarray(dist.means)[comp]
    sds = np.sqrt(np.asarray(dist.variances))[comp]
    return rng.normal(means, sds)


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Recipe for a synthetic dataset.

    ``covariance`` governs the non-intercept features, so it has one
    fewer dimension than ``theta_star``.
    """

    theta_star: tuple[float, ...]
    covariance: np.ndarray
    error_dist: ErrorDist
    n: int
    seed: int

    def __post_init__(self):
        theta = tuple(float(v) for v in self.theta_star)
        cov = np.array(self.covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise InvalidCovariance("covariance must be a square matrix")
        if cov.shape[0] != len(theta) - 1:
            raise InvalidCovariance(
                f"covariance is {cov.shape[0]}x{cov.shape[0]} but theta_star has "
                f"{len(theta)} coefficients (needs one intercept + {cov.shape[0]} features)"
            )
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise InvalidCovariance("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise InvalidCovariance("covariance must be positive definite")
        if not self.n >= 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        cov.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "covariance", cov)

    @property
    def p(self) -> int:
        return len(self.theta_star)


def default_spec(n: int, dist: str | ErrorDist = "normal", seed: int = 0) -> SyntheticSpec:
    """The stock 5-coefficient design used by the CLI and benchmarks."""
    if isinstance(dist, str):
        dist = ErrorDist.from_name(dist)
    return SyntheticSpec(
        theta_star=DEFAULT_THETA_STAR,
        covariance=ar1_covariance(len(DEFAULT_THETA_STAR) - 1, 0.5),
        error_dist=dist,
        n=n,
        seed=seed,
    )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset from the recipe; deterministic given the seed.

    Features are ``x = (1, z)`` with ``z ~ N(0, covariance)`` via a
    Cholesky factor, and ``d = x @ theta_star + eps``.
    """
    rng = np.random.default_rng(spec.seed)
    chol = np.linalg.cholesky(spec.covariance)
    z = rng.standard_normal((spec.n, spec.p - 1)) @ chol.T
    x = np.column_stack([np.ones(spec.n), z])
    eps = sample_errors(spec.error_dist, spec.n, rng)
    d = x @ np.asarray(spec.theta_star) + eps
    return Dataset(demands=d, features=x)


def true_beta_star(spec: SyntheticSpec, tau: float) -> np.ndarray:
    """Clairvoyant optimal coefficients at quantile level tau.

    Equals ``theta_star`` with the noise quantile added to the intercept
    coordinate only.
    """
    beta = np.array(spec.theta_star, dtype=float)
    beta[0] += error_quantile(spec.error_dist, tau)
    return beta


def load_csv(path, demand_column: str) -> Dataset:
    """Load a UTF-8 CSV with a header row into a Dataset.

    The demand column is removed from the features, an intercept column
    is prepended, and remaining columns keep their file order.  Every
    cell must parse as a finite number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if demand_column not in header:
            raise MissingColumn(
                f"column {demand_column!r} not found in {path} (columns: {header})"
            )
        d_idx = header.index(demand_column)
        demands = []
        rows = []
        for i, row in enumerate(reader, start=1):
            parsed = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(i, name, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(i, name, cell)
                parsed.append(v)
            if len(parsed) != len(header):
                raise ValueError(f"{path}: row {i} has {len(parsed)} cells, expected {len(header)}")
            demands.append(parsed[d_idx])
            rows.append([v for j, v in enumerate(parsed) if j != d_idx])
    n = len(demands)
    if n == 0:
        raise ValueError(f"{path}: no data rows")
    features = np.column_stack([np.ones(n), np.asarray(rows, dtype=float)])
    return Dataset(demands=np.asarray(demands), features=features)


@dataclass(frozen=True, eq=False)
class Whitener:
    """Second-moment matrix with its inverse square root and inverse."""

    sigma_matrix: np.ndarray
    inv_sqrt: np.ndarray
    inv: np.ndarray

    def __post_init__(self):
        for name in ("sigma_matrix", "inv_sqrt", "inv"):
            m = np.array(getattr(self, name), dtype=float)
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def p(self) -> int:
        return self.sigma_matrix.shape[0]


def _whitener_from_matrix(sigma: np.ndarray) -> Whitener:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidCovariance("second-moment matrix must be square")
    sigma = 0.5 * (sigma + sigma.T)
    evals, vecs = np.linalg.eigh(sigma)
    if evals.min() <= 1e-10 * evals.max():
        raise SingularCovariance(
            f"second-moment matrix is numerically singular (eigenvalues {evals})"
        )
    inv_sqrt = (vecs / np.sqrt(evals)) @ vecs.T
    inv = (vecs / evals) @ vecs.T
    return Whitener(sigma_matrix=sigma, inv_sqrt=inv_sqrt, inv=inv)


def whitener_from(source) -> Whitener:
    """Build a whitener from a SyntheticSpec, a Dataset, or a matrix.

    A SyntheticSpec yields the exact second moment of its features
    (block diagonal: 1 for the intercept, the feature covariance for the
    rest).  A Dataset yields the empirical second moment ``X'X / n``.
    """
    if isinstance(source, SyntheticSpec):
        p = source.p
        sigma = np.zeros((p, p))
        sigma[0, 0] = 1.0
        sigma[1:, 1:] = source.covariance
        return _whitener_from_matrix(sigma)
    if isinstance(source, Dataset):
        x = source.features
        return _whitener_from_matrix(x.T @ x / source.n)
    return _whitener_from_matrix(np.asarray(source, dtype=float))


def train_test_split(data: Dataset, n_train: int, seed) -> tuple[Dataset, Dataset]:
    """Uniform random partition without replacement; seed-deterministic."""
    if not 1 <= n_train < data.n:
        raise SplitTooLarge(
            f"n_train must be in [1, {data.n - 1}], got {n_train}"
        )
    perm = np.random.default_rng(seed).permutation(data.n)
    tr, te = perm[:n_train], perm[n_train:]
    return (
        Dataset(demands=data.demands[tr], features=data.features[tr]),
        Dataset(demands=data.demands[te], features=data.features[te]),
    )


def demean_features(data: Dataset) -> tuple[Dataset, np.ndarray]:
    """Center the non-intercept columns; returns the removed means.

    The returned vector has length p with a zero in the intercept slot,
    so adding it back to the features recovers the original matrix.
    """
    means = data.features.mean(axis=0)
    means[0] = 0.0
    return (
        Dataset(demands=data.demands, features=data.features - means),
        means,
    )
