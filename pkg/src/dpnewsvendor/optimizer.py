"""Noisy smoothed gradient descent with covariate clipping.

The private fit runs a fixed number ``T`` of gradient steps on the
smoothed newsvendor objective.  Each step clips the per-observation
covariates to an L2 ball of radius ``B`` (bounding the influence of any
single record) and adds isotropic Gaussian noise of scale ``sigma``.
With ``sigma >= 2 * tau_bar * B * sqrt(T) / mu`` the released
coefficients satisfy mu-GDP.

Two update forms are available: ``known_sigma_matrix`` whitens the
covariates with the inverse square root of their second-moment matrix
before clipping, and ``raw_covariates`` (the default, appropriate for
real data) clips the covariates as-is.

Step size policy: a fixed ``step_size`` reproduces the textbook
algorithm.  When ``step_size`` is None the fit picks a step each
iteration by Armijo backtracking of the noise-free smoothed objective
along the clipped update direction, with the search grid expanded up to
``max_step_size``.  The line search reads the data beyond the noised
gradient, so it sits outside the formal privacy accounting; runs that
must match the certificate exactly should fix ``step_size`` by hand.
The same caveat applies to the returned gradient-norm diagnostics,
which are not noised and must not be released.
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, model
from .data import Whitener
from .errors import (
    DimensionMismatch,
    LineSearchFailed,
    MaxIterExceeded,
    MissingWhitener,
    NonPositiveBandwidth,
    NonPositiveMu,
)
from .kernels import KernelDescriptor, as_kernel
from .model import Dataset, Problem
from .privacy import PrivacyCertificate, calibrate_sigma

MODES = ("known_sigma_matrix", "raw_covariates")

_MAX_SHRINKS = 60


def default_bandwidth(tau: float, n: int, p: int) -> float:
    """Rule-of-thumb smoothing bandwidth.

    ``sqrt(tau * (1 - tau)) * ((p + log n) / n) ** (2/5)`` with the
    natural logarithm.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if not n >= 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return math.sqrt(tau * (1.0 - tau)) * ((p + math.log(n)) / n) ** 0.4


@dataclass(frozen=True)
class HyperParams:
    """Knobs of the noisy gradient descent fit.

    ``sigma`` is the per-step noise scale; pick it with
    ``privacy.calibrate_sigma`` to hit a GDP target ``mu``.  ``mu`` is
    optional and only used to request a privacy certificate on the fit
    result.  ``step_size=None`` selects the per-iteration line search
    described in the module docstring.
    """

    bandwidth: float
    n_steps: int
    clip_radius: float = math.inf
    step_size: float | None = None
    mu: float | None = None
    sigma: float = 0.0
    seed: int = 0
    kernel: KernelDescriptor | str = "gaussian"
    mode: str = "known_sigma_matrix"
    max_step_size: float = 4.0

    def __post_init__(self):
        if not self.bandwidth > 0.0:
            raise NonPositiveBandwidth(f"bandwidth must be > 0, got {self.bandwidth}")
        if not self.n_steps >= 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if not self.clip_radius >= 1.0:
            raise ValueError(f"clip_radius must be >= 1, got {self.clip_radius}")
        if self.step_size is not None and not self.step_size > 0.0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.mu is not None and not self.mu > 0.0:
            raise NonPositiveMu(f"mu must be > 0, got {self.mu}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.max_step_size >= 1.0:
            raise ValueError(f"max_step_size must be >= 1, got {self.max_step_size}")
        object.__setattr__(self, "kernel", as_kernel(self.kernel))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Output of a fit: final coefficients plus bookkeeping.

    ``trajectory`` (when kept) stacks the T+1 iterates, ending at
    ``beta_final``.  ``gradient_norms`` holds the noise-free smoothed
    gradient norm at each visited iterate; these diagnostics bypass the
    privacy mechanism and are for local analysis only.
    ``certificate_unavailable`` flags that a certificate was requested
    but the noise scale does not meet the calibration bound.
    """

    beta_final: np.ndarray
    trajectory: np.ndarray | None
    certificate: PrivacyCertificate | None
    gradient_norms: np.ndarray
    certificate_unavailable: bool = False


class NoiseSource:
    """Standard normal vectors from a seeded counter-based generator.

    Deterministic given the seed: the Philox bit generator feeds numpy's
    ziggurat normal transform.
    """

    def __init__(self, seed):
        self._gen = np.random.Generator(np.random.Philox(seed))

    def standard_normal(self, p: int) -> np.ndarray:
        return self._gen.standard_normal(p)


class SecureNoiseSource:
    """Standard normal vectors from the operating system's entropy pool.

    Uses ``random.SystemRandom``; there is no seed, so runs are not
    reproducible.  Intended for deployments where the noise itself must
    be unpredictable.
    """

    def __init__(self):
        self._gen = random.SystemRandom()

    def standard_normal(self, p: int) -> np.ndarray:
        return np.array([self._gen.gauss(0.0, 1.0) for _ in range(p)])


def clip(u: np.ndarray, radius: float) -> np.ndarray:
    """Radial truncation u / max(1, ||u||_2 / radius).

    Preserves direction, is the identity inside the ball, and caps the
    norm at ``radius``.  For a 2-d input each row is clipped.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be > 0, got {radius}")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return u / max(1.0, np.linalg.norm(u) / radius)
    if u.ndim == 2:
        norms = np.linalg.norm(u, axis=1)
        return u / np.maximum(1.0, norms / radius)[:, None]
    raise ValueError("clip expects a vector or a matrix of row vectors")


def _warn_if_flat_kernel(kernel: KernelDescriptor):
    if kernel.kind == "epanechnikov":
        warnings.warn(
            "the epanechnikov kernel has zero minimum density on [-1, 1]; "
            "curvature-based convergence guarantees do not apply",
            RuntimeWarning,
            stacklevel=3,
        )


def _q_value(data: Dataset, problem: Problem, kernel, bandwidth: float, beta) -> float:
    return model.smoothed_empirical_cost(problem, data, beta, kernel, bandwidth) / (
        problem.total_cost
    )


def backtracking_step_size(
    data: Dataset,
    problem: Problem,
    kernel: KernelDescriptor | str,
    bandwidth: float,
    beta: np.ndarray,
    shrink: float = 0.5,
    c: float = 1e-4,
    expand: bool = False,
    max_step: float = 4.0,
) -> float:
    """Armijo backtracking step size at ``beta``.

    Returns the largest eta in {1, shrink, shrink^2, ...} satisfying
    ``Q(beta - eta * g) <= Q(beta) - c * eta * ||g||^2`` where Q is the
    smoothed objective scaled by 1/(b+h) and g its gradient.  With
    ``expand`` the grid is extended upward by doubling while the
    condition holds, capped at ``max_step``.
    """
    if not 0.0 < shrink < 1.0:
        raise ValueError(f"shrink must be in (0, 1), got {shrink}")
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must be in (0, 1), got {c}")
    beta = np.asarray(beta, dtype=float)
    g = model.smoothed_gradient(problem, data, beta, kernel, bandwidth)
    gg = float(g @ g)
    if gg == 0.0:
        return 1.0
    q0 = _q_value(data, problem, kernel, bandwidth, beta)

    def acceptable(eta: float) -> bool:
        return _q_value(data, problem, kernel, bandwidth, beta - eta * g) <= q0 - c * eta * gg

    eta = 1.0
    if not acceptable(eta):
        for _ in range(_MAX_SHRINKS):
            eta *= shrink
            if acceptable(eta):
                return eta
        raise LineSearchFailed(
            f"no acceptable step after {_MAX_SHRINKS} shrinks (last eta={eta:.3g})"
        )
    if expand:
        while 2.0 * eta <= max_step and acceptable(2.0 * eta):
            eta *= 2.0
    return eta


def _gradient_coefficients(
    data: Dataset, problem: Problem, kernel, bandwidth: float, beta: np.ndarray
) -> np.ndarray:
    # Kbar((x_i @ beta - d_i) / bw) - tau, one weight per observation
    fitted = data.features @ beta
    return kernels.scaled_cdf(kernel, fitted - data.demands, bandwidth) - problem.tau


def _noise_free_direction(
    beta: np.ndarray,
    data: Dataset,
    problem: Problem,
    hp: HyperParams,
    whitener: Whitener | None,
) -> np.ndarray:
    """The clipped update direction of noisy_step with the noise removed."""
    coefs = _gradient_coefficients(data, problem, hp.kernel, hp.bandwidth, beta)
    if hp.mode == "known_sigma_matrix":
        if whitener is None:
            raise MissingWhitener("known_sigma_matrix mode requires a whitener")
        w_clipped = clip(data.features @ whitener.inv_sqrt, hp.clip_radius)
        return whitener.inv_sqrt @ (w_clipped.T @ coefs) / data.n
    x_clipped = clip(data.features, hp.clip_radius)
    return x_clipped.T @ coefs / data.n


def _armijo_along_direction(
    data: Dataset,
    problem: Problem,
    kernel,
    bandwidth: float,
    beta: np.ndarray,
    direction: np.ndarray,
    slope: float,
    max_step: float,
    shrink: float = 0.5,
    c: float = 1e-4,
) -> float:
    """Armijo search for a step along an arbitrary descent direction.

    ``slope`` is the inner product of the gradient with the direction;
    a non-positive slope (stationary or degenerate direction) returns 1.
    """
    if slope <= 0.0:
        return 1.0
    q0 = _q_value(data, problem, kernel, bandwidth, beta)

    def acceptable(eta: float) -> bool:
        return (
            _q_value(data, problem, kernel, bandwidth, beta - eta * direction)
            <= q0 - c * eta * slope
        )

    eta = 1.0
    if not acceptable(eta):
        for _ in range(_MAX_SHRINKS):
            eta *= shrink
            if acceptable(eta):
                return eta
        raise LineSearchFailed(
            f"no acceptable step after {_MAX_SHRINKS} shrinks (last eta={eta:.3g})"
        )
    while 2.0 * eta <= max_step and acceptable(2.0 * eta):
        eta *= 2.0
    return eta


def noisy_step(
    beta: np.ndarray,
    data: Dataset,
    problem: Problem,
    hp: HyperParams,
    g: np.ndarray,
    whitener: Whitener | None = None,
) -> np.ndarray:
    """One clipped, noised gradient update from ``beta``.

    In ``known_sigma_matrix`` mode the whitener is required and the
    update is
    ``beta - (eta/n) * S^{-1/2} [ sum_i w_i_coef * clip(S^{-1/2} x_i, B) + sigma * g ]``;
    ``raw_covariates`` mode clips the raw ``x_i`` and drops the
    ``S^{-1/2}`` factors.  ``g`` is the standard normal noise vector for
    this step.
    """
    beta = np.asarray(beta, dtype=float)
    if len(beta) != data.p:
        raise DimensionMismatch(
            f"state has {len(beta)} coefficients but dataset has {data.p} features"
        )
    if hp.step_size is None:
        raise ValueError("noisy_step requires an explicit step_size in HyperParams")
    g = np.asarray(g, dtype=float)
    if g.shape != (data.p,):
        raise DimensionMismatch(f"noise vector must have shape ({data.p},)")

    coefs = _gradient_coefficients(data, problem, hp.kernel, hp.bandwidth, beta)
    if hp.mode == "known_sigma_matrix":
        if whitener is None:
            raise MissingWhitener("known_sigma_matrix mode requires a whitener")
        w = data.features @ whitener.inv_sqrt
        w_clipped = clip(w, hp.clip_radius)
        summed = w_clipped.T @ coefs + hp.sigma * g
        return beta - (hp.step_size / data.n) * (whitener.inv_sqrt @ summed)
    x_clipped = clip(data.features, hp.clip_radius)
    summed = x_clipped.T @ coefs + hp.sigma * g
    return beta - (hp.step_size / data.n) * summed


def fit(
    data: Dataset,
    problem: Problem,
    hp: HyperParams,
    beta0: np.ndarray | None = None,
    whitener: Whitener | None = None,
    keep_trajectory: bool = False,
    noise: NoiseSource | SecureNoiseSource | None = None,
) -> FitResult:
    """Run exactly ``hp.n_steps`` noisy updates from ``beta0``.

    Deterministic given ``hp.seed`` (unless a secure noise source is
    supplied).  A privacy certificate is attached when ``hp.mu`` is set
    and ``hp.sigma`` meets the calibration bound; otherwise the result
    carries ``certificate_unavailable=True``.
    """
    _warn_if_flat_kernel(hp.kernel)
    if beta0 is None:
        beta = np.zeros(data.p)
    else:
        beta = np.array(beta0, dtype=float)
        if beta.shape != (data.p,):
            raise DimensionMismatch(
                f"beta0 has shape {beta.shape}, expected ({data.p},)"
            )
    if noise is None:
        noise = NoiseSource(hp.seed)

    trajectory = [beta.copy()] if keep_trajectory else None
    grad_norms = np.empty(hp.n_steps)
    for t in range(hp.n_steps):
        grad = model.smoothed_gradient(problem, data, beta, hp.kernel, hp.bandwidth)
        grad_norms[t] = np.linalg.norm(grad)
        if hp.step_size is None:
            direction = _noise_free_direction(beta, data, problem, hp, whitener)
            eta = _armijo_along_direction(
                data,
                problem,
                hp.kernel,
                hp.bandwidth,
                beta,
                direction,
                float(grad @ direction),
                hp.max_step_size,
            )
            step_hp = replace(hp, step_size=eta)
        else:
            step_hp = hp
        g = noise.standard_normal(data.p)
        beta = noisy_step(beta, data, problem, step_hp, g, whitener)
        if keep_trajectory:
            trajectory.append(beta.copy())

    certificate = None
    certificate_unavailable = False
    if hp.mu is not None:
        tau_bar = max(problem.tau, 1.0 - problem.tau)
        eligible = (
            hp.n_steps >= 1
            and math.isfinite(hp.clip_radius)
            and hp.sigma >= calibrate_sigma(hp.mu, hp.clip_radius, hp.n_steps, tau_bar)
        )
        if eligible:
            certificate = PrivacyCertificate(
                mu=hp.mu,
                sigma=hp.sigma,
                n_steps=hp.n_steps,
                clip_radius=hp.clip_radius,
                tau_bar=tau_bar,
            )
        else:
            certificate_unavailable = True

    return FitResult(
        beta_final=beta,
        trajectory=np.asarray(trajectory) if keep_trajectory else None,
        certificate=certificate,
        gradient_norms=grad_norms,
        certificate_unavailable=certificate_unavailable,
    )


def smoothed_erm(
    data: Dataset,
    problem: Problem,
    kernel: KernelDescriptor | str,
    bandwidth: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    standardize: bool = True,
) -> np.ndarray:
    """Non-private minimizer of the smoothed empirical cost.

    Gradient descent with per-iteration Armijo backtracking, run until
    the gradient norm (in the original coordinates) drops to ``tol``.
    With ``standardize`` the descent runs on z-scored features to tame
    badly scaled inputs; the returned coefficients are always on the
    original scale and the minimizer is unchanged by the rescaling.
    """
    kernel = as_kernel(kernel)
    _warn_if_flat_kernel(kernel)
    if standardize and data.p > 1:
        means = data.features[:, 1:].mean(axis=0)
        sds = data.features[:, 1:].std(axis=0)
        sds = np.where(sds < 1e-12, 1.0, sds)
        work = Dataset(
            demands=data.demands,
            features=np.column_stack(
                [np.ones(data.n), (data.features[:, 1:] - means) / sds]
            ),
        )
    else:
        means = np.zeros(max(data.p - 1, 0))
        sds = np.ones(max(data.p - 1, 0))
        work = data

    def to_original(beta_std: np.ndarray) -> np.ndarray:
        beta = beta_std.copy()
        beta[1:] = beta_std[1:] / sds
        beta[0] = beta_std[0] - means @ beta[1:]
        return beta

    beta_std = np.zeros(data.p)
    for _ in range(max_iter):
        g = model.smoothed_gradient(
            problem, data, to_original(beta_std), kernel, bandwidth
        )
        if np.linalg.norm(g) <= tol:
            return to_original(beta_std)
        eta = backtracking_step_size(
            work, problem, kernel, bandwidth, beta_std, expand=True, max_step=2.0**16
        )
        g_std = model.smoothed_gradient(problem, work, beta_std, kernel, bandwidth)
        beta_std = beta_std - eta * g_std
    raise MaxIterExceeded(
        f"gradient norm still above {tol} after {max_iter} iterations"
    )


def sphere_initial_value(p: int, seed) -> np.ndarray:
    """A start point drawn uniformly from the unit sphere."""
    g = np.random.default_rng(seed).standard_normal(p)
    return g / np.linalg.norm(g)
