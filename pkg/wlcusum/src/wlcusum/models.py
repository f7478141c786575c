"""Parametric pre-/post-change density families.

Supported pairs (pre-change f_inf, post-change f_0(., theta)):

- ``gaussian``: N(0, I_k) -> N(theta, I_k), theta restricted to
  ``{||theta|| >= barrier}`` (a barrier of 0 means the full space).
- ``laplace-normal``: Laplace with zero mean and unit variance ->
  N(mu, sigma^2) with sigma^2 known, theta = (mu,).
- ``laplace-normal-unknown-var``: same pre-change law -> N(mu, v) with both
  unknown, theta = (mu, v), v > 0.

All densities are evaluated in log space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .exceptions import DomainError, InputError
from .types import FamilyKind, ParameterSetKind, Vector
from .validators import InputValidator

logger = logging.getLogger(__name__)

# Floor for the unknown-variance MLE; windows of identical samples otherwise give log(0).
EPS_VAR = 1e-8

# Laplace scale b with variance 2 b^2 = 1.
LAPLACE_SCALE = 1.0 / math.sqrt(2.0)

INFO_MC_DRAWS = 1_000_000
INFO_MC_SEED = 20_240_917

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_HALF_LOG_2 = 0.5 * math.log(2.0)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ParameterSet:
    """
    Admissible set Theta for the post-change parameter.

    Examples:
        >>> ParameterSet.norm_barrier(0.5).contains(np.array([0.3]))
        False
        >>> ParameterSet.full_space().contains(np.array([0.0]))
        True
    """

    kind: ParameterSetKind
    barrier: float = 0.0

    def __post_init__(self):
        if self.kind == ParameterSetKind.NORM_BARRIER and not self.barrier > 0.0:
            raise DomainError(f"Norm barrier must be > 0, got {self.barrier}")

    @classmethod
    def full_space(cls) -> 'ParameterSet':
        return cls(ParameterSetKind.FULL_SPACE)

    @classmethod
    def norm_barrier(cls, barrier: float) -> 'ParameterSet':
        return cls(ParameterSetKind.NORM_BARRIER, float(barrier))

    @classmethod
    def positive_variance(cls) -> 'ParameterSet':
        return cls(ParameterSetKind.POSITIVE_VARIANCE)

    def contains(self, theta: Vector) -> bool:
        """Membership test for a finite parameter vector."""
        theta = np.asarray(theta, dtype=np.float64)
        if not np.all(np.isfinite(theta)):
            return False
        if self.kind == ParameterSetKind.NORM_BARRIER:
            # Projected points may sit a rounding error below the barrier.
            return float(np.linalg.norm(theta)) >= self.barrier * (1.0 - 1e-12)
        if self.kind == ParameterSetKind.POSITIVE_VARIANCE:
            return theta.shape[0] == 2 and theta[1] > 0.0
        return True


@dataclass(frozen=True)
class ModelSpec:
    """
    A pre-/post-change family together with its parameter set.

    Model objects are immutable and hashable, so they can be shared across
    threads and used as cache keys.

    Examples:
        >>> model = ModelSpec.gaussian(dimension=2, barrier=0.5)
        >>> model.parameter_dimension
        2
        >>> ModelSpec.laplace_normal_unknown_var().parameter_dimension
        2
    """

    family: FamilyKind
    parameter_set: ParameterSet
    dimension: int = 1
    variance: float = 1.0

    def __post_init__(self):
        InputValidator.positive_int('dimension', self.dimension)
        kind = self.parameter_set.kind
        if self.family == FamilyKind.GAUSSIAN:
            if kind not in (ParameterSetKind.NORM_BARRIER, ParameterSetKind.FULL_SPACE):
                raise DomainError("Gaussian family needs a norm barrier or the full space")
        else:
            if self.dimension != 1:
                raise DomainError("Laplace->Normal families are univariate")
            expected = (
                ParameterSetKind.POSITIVE_VARIANCE
                if self.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR
                else ParameterSetKind.FULL_SPACE
            )
            if kind != expected:
                raise DomainError(f"{self.family.value} needs parameter set {expected.value}")
            if not self.variance > 0.0:
                raise DomainError(f"Variance must be > 0, got {self.variance}")

    @classmethod
    def gaussian(cls, dimension: int = 1, barrier: float = 0.5) -> 'ModelSpec':
        """Gaussian mean shift; ``barrier=0`` disables the constraint."""
        pset = ParameterSet.norm_barrier(barrier) if barrier > 0 else ParameterSet.full_space()
        return cls(FamilyKind.GAUSSIAN, pset, dimension=dimension)

    @classmethod
    def laplace_normal(cls, variance: float = 1.0) -> 'ModelSpec':
        """Laplace -> N(mu, variance) with the variance known."""
        return cls(FamilyKind.LAPLACE_NORMAL, ParameterSet.full_space(), variance=float(variance))

    @classmethod
    def laplace_normal_unknown_var(cls) -> 'ModelSpec':
        """Laplace -> N(mu, v) with mean and variance both estimated."""
        return cls(FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR, ParameterSet.positive_variance())

    @property
    def parameter_dimension(self) -> int:
        """Length K of the parameter vector."""
        if self.family == FamilyKind.GAUSSIAN:
            return self.dimension
        if self.family == FamilyKind.LAPLACE_NORMAL:
            return 1
        return 2

    @property
    def barrier(self) -> float:
        return self.parameter_set.barrier

    @property
    def min_segment(self) -> int:
        """Shortest segment with a non-degenerate MLE."""
        return 2 if self.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR else 1

    def check_theta(self, theta: Any) -> Vector:
        """Coerce theta to a finite vector of length K."""
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if theta.ndim != 1 or theta.shape[0] != self.parameter_dimension:
            raise InputError(
                f"Parameter has dimension {theta.size}, expected {self.parameter_dimension}"
            )
        if not np.all(np.isfinite(theta)):
            raise InputError(f"Parameter has non-finite entries: {theta.tolist()}")
        if self.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR and theta[1] <= 0.0:
            raise DomainError(f"Variance component must be > 0, got {theta[1]}")
        return theta


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def log_density_pre(model: ModelSpec, x: Any) -> float:
    """
    Log of the pre-change density f_inf(x).

    Examples:
        >>> log_density_pre(ModelSpec.gaussian(), 0.0)
        -0.9189385332046727
        >>> log_density_pre(ModelSpec.laplace_normal(), 0.0)
        -0.34657359027997264
    """
    x = InputValidator.observation(x, model.dimension)
    if model.family == FamilyKind.GAUSSIAN:
        return float(-model.dimension * _HALF_LOG_2PI - 0.5 * np.dot(x, x))
    return float(-_HALF_LOG_2 - _SQRT2 * abs(x[0]))


def log_density_post(model: ModelSpec, x: Any, theta: Any) -> float:
    """
    Log of the post-change density f_0(x, theta).

    Raises:
        DomainError: If the variance component is not positive

    Examples:
        >>> log_density_post(ModelSpec.gaussian(), 1.0, 1.0)
        -0.9189385332046727
        >>> log_density_post(ModelSpec.laplace_normal(variance=4.0), 0.0, 0.0)
        -1.612085713764618
    """
    x = InputValidator.observation(x, model.dimension)
    theta = model.check_theta(theta)
    if model.family == FamilyKind.GAUSSIAN:
        d = x - theta
        return float(-model.dimension * _HALF_LOG_2PI - 0.5 * np.dot(d, d))
    mu, var = _mean_and_variance(model, theta[None, :])
    return float(-0.5 * math.log(2.0 * math.pi * var[0]) - (x[0] - mu[0]) ** 2 / (2.0 * var[0]))


def llr(model: ModelSpec, x: Any, theta: Any) -> float:
    """
    Log-likelihood ratio log f_0(x, theta) / f_inf(x).

    Examples:
        >>> llr(ModelSpec.gaussian(), 1.0, 1.0)
        0.5
        >>> llr(ModelSpec.gaussian(), 0.5, 1.0)
        0.0
    """
    x = InputValidator.observation(x, model.dimension)
    theta = model.check_theta(theta)
    return float(llr_rows(model, x, theta[None, :])[0])


def llr_batch(model: ModelSpec, x: Any, thetas: Any) -> np.ndarray:
    """
    Log-likelihood ratios of one observation against many parameter rows.

    Args:
        model: Model specification
        x: Observation of length k
        thetas: Array of shape (n, K)

    Returns:
        Array of n log-likelihood ratios
    """
    x = InputValidator.observation(x, model.dimension)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[1] != model.parameter_dimension:
        raise InputError(
            f"Parameter rows have dimension {thetas.shape[1]}, "
            f"expected {model.parameter_dimension}"
        )
    if model.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR and np.any(thetas[:, 1] <= 0.0):
        raise DomainError("Variance component must be > 0")
    return llr_rows(model, x, thetas)


def llr_rows(model: ModelSpec, x: Vector, thetas: np.ndarray) -> np.ndarray:
    """Unchecked ``llr_batch`` for detector inner loops."""
    if model.family == FamilyKind.GAUSSIAN:
        return thetas @ x - 0.5 * np.einsum('ij,ij->i', thetas, thetas)
    mu, var = _mean_and_variance(model, thetas)
    return (
        -0.5 * np.log(2.0 * math.pi * var)
        - (x[0] - mu) ** 2 / (2.0 * var)
        + _HALF_LOG_2
        + _SQRT2 * abs(x[0])
    )


def _llr_samples(model: ModelSpec, xs: np.ndarray, theta: Vector) -> np.ndarray:
    """Log-likelihood ratios of many observations (n, k) at one parameter."""
    if model.family == FamilyKind.GAUSSIAN:
        return xs @ theta - 0.5 * float(np.dot(theta, theta))
    mu, var = _mean_and_variance(model, theta[None, :])
    x = xs[:, 0]
    return (
        -0.5 * math.log(2.0 * math.pi * var[0])
        - (x - mu[0]) ** 2 / (2.0 * var[0])
        + _HALF_LOG_2
        + _SQRT2 * np.abs(x)
    )


def llr_pairs(model: ModelSpec, xs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Log-likelihood ratio of row ``xs[i]`` at parameter row ``thetas[i]``."""
    if model.family == FamilyKind.GAUSSIAN:
        return np.einsum('ij,ij->i', thetas, xs) - 0.5 * np.einsum('ij,ij->i', thetas, thetas)
    mu, var = _mean_and_variance(model, thetas)
    x = xs[:, 0]
    return (
        -0.5 * np.log(2.0 * math.pi * var)
        - (x - mu) ** 2 / (2.0 * var)
        + _HALF_LOG_2
        + _SQRT2 * np.abs(x)
    )


def _mean_and_variance(model: ModelSpec, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if model.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR:
        return thetas[:, 0], thetas[:, 1]
    return thetas[:, 0], np.full(thetas.shape[0], model.variance)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_pre(model: ModelSpec, rng: np.random.Generator) -> Vector:
    """Draw one observation from f_inf."""
    return sample_pre_block(model, rng, 1)[0]


def sample_post(model: ModelSpec, theta: Any, rng: np.random.Generator) -> Vector:
    """Draw one observation from f_0(., theta)."""
    return sample_post_block(model, theta, rng, 1)[0]


def sample_pre_block(model: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """
    Draw ``n`` pre-change observations as an ``(n, k)`` array.

    Examples:
        >>> rng = np.random.default_rng(7)
        >>> sample_pre_block(ModelSpec.gaussian(dimension=2), rng, 3).shape
        (3, 2)
    """
    if model.family == FamilyKind.GAUSSIAN:
        return rng.standard_normal((n, model.dimension))
    return rng.laplace(0.0, LAPLACE_SCALE, size=(n, 1))


def sample_post_block(
    model: ModelSpec,
    theta: Any,
    rng: np.random.Generator,
    n: int,
) -> np.ndarray:
    """Draw ``n`` post-change observations as an ``(n, k)`` array."""
    theta = model.check_theta(theta)
    if model.family == FamilyKind.GAUSSIAN:
        return theta + rng.standard_normal((n, model.dimension))
    mu, var = _mean_and_variance(model, theta[None, :])
    return mu[0] + math.sqrt(var[0]) * rng.standard_normal((n, 1))


# ---------------------------------------------------------------------------
# Projection and maximum likelihood
# ---------------------------------------------------------------------------


def project(model: ModelSpec, theta_raw: Any) -> Vector:
    """
    Map a raw parameter onto the admissible set Theta.

    Under a norm barrier the vector is rescaled to norm ``max(||theta||, barrier)``;
    the zero vector goes to ``barrier * e_1``.

    Examples:
        >>> project(ModelSpec.gaussian(barrier=0.5), [0.3])
        array([0.5])
        >>> project(ModelSpec.gaussian(barrier=0.5), [0.8])
        array([0.8])
    """
    theta_raw = np.atleast_1d(np.asarray(theta_raw, dtype=np.float64))
    if theta_raw.shape[0] != model.parameter_dimension or not np.all(np.isfinite(theta_raw)):
        raise InputError(f"Cannot project parameter {theta_raw.tolist()}")
    return project_rows(model, theta_raw[None, :].copy())[0]


def project_rows(model: ModelSpec, rows: np.ndarray) -> np.ndarray:
    """Project every row of ``rows`` onto Theta, in place."""
    kind = model.parameter_set.kind
    if kind == ParameterSetKind.NORM_BARRIER:
        barrier = model.parameter_set.barrier
        norms = np.sqrt(np.einsum('ij,ij->i', rows, rows))
        inside = norms >= barrier
        if not np.all(inside):
            zero = norms == 0.0
            scale = np.where(inside | zero, 1.0, barrier / np.where(zero, 1.0, norms))
            rows *= scale[:, None]
            if np.any(zero):
                rows[zero] = 0.0
                rows[zero, 0] = barrier
    elif kind == ParameterSetKind.POSITIVE_VARIANCE:
        np.maximum(rows[:, 1], EPS_VAR, out=rows[:, 1])
    return rows


def mle_from_sums(
    model: ModelSpec,
    counts: np.ndarray,
    sums: np.ndarray,
    sq_sums: np.ndarray | None = None,
) -> np.ndarray:
    """
    Constrained MLE for several windows from their sufficient statistics.

    Args:
        model: Model specification
        counts: Window lengths, shape (n,)
        sums: Per-window sums of observations, shape (n, k)
        sq_sums: Per-window sums of squares, shape (n, k); needed only for the
            unknown-variance family

    Returns:
        Parameter rows of shape (n, K), each inside Theta
    """
    means = sums / counts[:, None]
    if model.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR:
        var = sq_sums[:, 0] / counts - means[:, 0] ** 2
        return project_rows(model, np.column_stack((means[:, 0], var)))
    return project_rows(model, means)


def window_mle(model: ModelSpec, samples: Sequence[Any] | np.ndarray) -> Vector:
    """
    Maximum likelihood estimate of theta over Theta from a window of samples.

    Raises:
        UsageError: If ``samples`` is empty

    Examples:
        >>> window_mle(ModelSpec.gaussian(barrier=0.5), [0.2, 0.4])
        array([0.5])
        >>> window_mle(ModelSpec.laplace_normal_unknown_var(), [0.0, 2.0])
        array([1., 1.])
    """
    arr = InputValidator.samples(samples, model.dimension)
    counts = np.array([float(arr.shape[0])])
    sums = arr.sum(axis=0)[None, :]
    sq_sums = (arr * arr).sum(axis=0)[None, :]
    return mle_from_sums(model, counts, sums, sq_sums)[0]


# ---------------------------------------------------------------------------
# Information numbers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InfoNumbers:
    """
    KL numbers, second moment and the matrices of the estimate-perturbed expansion.

    ``estimated`` names the fields obtained by Monte Carlo; their standard
    errors are in ``standard_errors``.
    """

    I0: float
    Iinf: float
    J0: float
    F0: np.ndarray
    Finf: np.ndarray
    Q0: np.ndarray
    Sigma0: np.ndarray
    SigmaInf: np.ndarray
    theta_inf: Vector
    estimated: frozenset[str] = frozenset()
    standard_errors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # Instances are shared through the cache.
        for value in (self.F0, self.Finf, self.Q0, self.Sigma0, self.SigmaInf, self.theta_inf):
            value.setflags(write=False)

    @property
    def crlb_trace(self) -> float:
        """trace(Sigma0 F0), at least K for unbiased estimators."""
        return float(np.trace(self.Sigma0 @ self.F0))


class ApproxInfoNumbers(NamedTuple):
    """Leading-order information numbers for a window of size w."""

    Ihat0: float
    IhatInf: float
    Jhat0: float


def info_numbers(model: ModelSpec, theta: Any, draws: int = INFO_MC_DRAWS) -> InfoNumbers:
    """
    Information numbers for the true post-change parameter ``theta``.

    Gaussian quantities are closed form. For the Laplace->Normal families the
    second moment J0 (and Q0 when the variance is unknown) are Monte Carlo
    estimates from ``draws`` samples, cached per (model, theta).

    Raises:
        DomainError: If theta is not in Theta

    Examples:
        >>> info = info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0])
        >>> info.I0, info.Iinf, info.J0
        (0.5, 0.125, 1.25)
    """
    theta = model.check_theta(theta)
    if not model.parameter_set.contains(theta):
        raise DomainError(f"Parameter {theta.tolist()} is outside the admissible set")
    return _info_numbers_cached(model, tuple(theta.tolist()), int(draws))


@lru_cache(maxsize=256)
def _info_numbers_cached(model: ModelSpec, theta_key: tuple[float, ...], draws: int) -> InfoNumbers:
    theta = np.array(theta_key, dtype=np.float64)
    if model.family == FamilyKind.GAUSSIAN:
        return _gaussian_info(model, theta)
    return _laplace_normal_info(model, theta, draws)


def _gaussian_info(model: ModelSpec, theta: Vector) -> InfoNumbers:
    k = model.dimension
    eye = np.eye(k)
    sq = float(np.dot(theta, theta))
    barrier = model.barrier
    # Any point at radius barrier maximizes the pre-change objective; keep e_1.
    theta_inf = np.zeros(k)
    theta_inf[0] = barrier
    return InfoNumbers(
        I0=sq / 2.0,
        Iinf=barrier ** 2 / 2.0,
        J0=sq ** 2 / 4.0 + sq,
        F0=eye.copy(),
        Finf=eye.copy(),
        Q0=(1.0 - sq / 2.0) * eye,
        Sigma0=eye.copy(),
        # Nominal value for the unprojected sample mean; see estimate_sigma_inf.
        SigmaInf=eye.copy(),
        theta_inf=theta_inf,
    )


def _normal_abs_mean(mu: float, var: float) -> float:
    """E|X| for X ~ N(mu, var)."""
    s = math.sqrt(var)
    return s * math.sqrt(2.0 / math.pi) * math.exp(-mu * mu / (2.0 * var)) + mu * (
        1.0 - 2.0 * float(stats.norm.cdf(-mu / s))
    )


def _laplace_normal_info(model: ModelSpec, theta: Vector, draws: int) -> InfoNumbers:
    unknown_var = model.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR
    mu = float(theta[0])
    var = float(theta[1]) if unknown_var else model.variance

    i0 = (
        -0.5 * math.log(2.0 * math.pi * var)
        - 0.5
        + _HALF_LOG_2
        + _SQRT2 * _normal_abs_mean(mu, var)
    )
    # Pre-change maximizer: mean 0 and (when estimated) variance 1; E_inf|X| = 1/sqrt(2).
    var_inf = 1.0 if unknown_var else var
    iinf = -_HALF_LOG_2 - 1.0 + 0.5 * math.log(2.0 * math.pi * var_inf) + 1.0 / (2.0 * var_inf)

    rng = np.random.default_rng(INFO_MC_SEED)
    xs = sample_post_block(model, theta, rng, draws)
    ell = _llr_samples(model, xs, theta)
    ell_sq = ell * ell
    j0 = float(ell_sq.mean())
    errors = {'J0': float(ell_sq.std(ddof=1) / math.sqrt(draws))}

    if unknown_var:
        d = xs[:, 0] - mu
        # Hessian of log f_0 in (mu, v).
        h_mm = np.full(draws, -1.0 / var)
        h_mv = -d / var ** 2
        h_vv = 0.5 / var ** 2 - d * d / var ** 3
        terms = [ell * h for h in (h_mm, h_mv, h_vv)]
        e_mm, e_mv, e_vv = (float(t.mean()) for t in terms)
        f0 = np.diag([1.0 / var, 0.5 / var ** 2])
        q0 = f0 + np.array([[e_mm, e_mv], [e_mv, e_vv]])
        errors['Q0'] = max(float(t.std(ddof=1)) for t in terms) / math.sqrt(draws)
        finf = np.diag([1.0, 0.5])
        sigma0 = np.diag([var, 2.0 * var ** 2])
        # Var_inf(X) = 1 and Var_inf(X^2) = E X^4 - 1 = 6 - 1 under the unit Laplace law.
        sigma_inf = np.diag([1.0, 5.0])
        theta_inf = np.array([0.0, 1.0])
        estimated = frozenset({'J0', 'Q0'})
    else:
        f0 = np.array([[1.0 / var]])
        q0 = np.array([[(1.0 - i0) / var]])
        finf = np.array([[1.0 / var]])
        sigma0 = np.array([[var]])
        sigma_inf = np.array([[1.0]])
        theta_inf = np.array([0.0])
        estimated = frozenset({'J0'})

    logger.debug(
        "Estimated information numbers for %s theta=%s from %d draws: J0=%.6g (se %.2g)",
        model.family.value, theta.tolist(), draws, j0, errors['J0'],
    )
    return InfoNumbers(
        I0=i0,
        Iinf=iinf,
        J0=j0,
        F0=f0,
        Finf=finf,
        Q0=q0,
        Sigma0=sigma0,
        SigmaInf=sigma_inf,
        theta_inf=theta_inf,
        estimated=estimated,
        standard_errors=errors,
    )


def approx_info_numbers(info: InfoNumbers, w: int) -> ApproxInfoNumbers:
    """
    Leading-order Ihat0, IhatInf, Jhat0 for window size ``w``.

    Examples:
        >>> info = info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0])
        >>> approx_info_numbers(info, 20).Ihat0
        0.475
    """
    w = InputValidator.positive_int('w', w)
    return ApproxInfoNumbers(
        Ihat0=info.I0 - float(np.trace(info.Sigma0 @ info.F0)) / (2.0 * w),
        IhatInf=info.Iinf + float(np.trace(info.SigmaInf @ info.Finf)) / (2.0 * w),
        Jhat0=info.J0 + float(np.trace(info.Sigma0 @ info.Q0)) / w,
    )


def estimate_sigma_inf(
    model: ModelSpec,
    w: int,
    rng: np.random.Generator,
    draws: int = 20_000,
) -> np.ndarray:
    """
    Monte Carlo estimate of Sigma_inf for the window MLE under pre-change data.

    Returns ``w * E_inf[(theta_hat - ref)(theta_hat - ref)^T]`` where ``ref``
    is the nearest pre-change maximizer: under a norm barrier every point at
    radius ``barrier`` maximizes, so ``ref`` is the radial projection of the
    estimate; otherwise ``ref`` is the unique maximizer.
    """
    w = InputValidator.positive_int('w', w)
    xs = sample_pre_block(model, rng, draws * w).reshape(draws, w, model.dimension)
    counts = np.full(draws, float(w))
    estimates = mle_from_sums(model, counts, xs.sum(axis=1), (xs * xs).sum(axis=1))
    if model.parameter_set.kind == ParameterSetKind.NORM_BARRIER:
        norms = np.linalg.norm(estimates, axis=1)
        ref = estimates * (model.barrier / norms)[:, None]
    else:
        ref = np.broadcast_to(_pre_change_maximizer(model), estimates.shape)
    dev = estimates - ref
    return w * (dev.T @ dev) / draws


def _pre_change_maximizer(model: ModelSpec) -> Vector:
    if model.family == FamilyKind.GAUSSIAN:
        return np.zeros(model.dimension)
    if model.family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR:
        return np.array([0.0, 1.0])
    return np.array([0.0])
