"""Gaussian process regression for noisy sorting measurements.

Zero prior mean on standardized targets, a squared-exponential kernel with one
length scale per process parameter, and per-observation variances weighted by
lambda on the kernel diagonal:

    K_new = K + lambda * diag(sigma^2) / s^2 + nugget * I

where s is the target scale, so the noise is in the same units as the
standardized targets.
"""
import logging
from collections import namedtuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

NUGGET_START = 1e-8
NUGGET_MAX = 1e-2
RESTARTS = 8
HYPERPARAMETER_SEED = 0
LOG_RANGE = (np.log(0.1), np.log(10.0))


class GprError(Exception):
    pass


class FactorizationFailure(GprError):
    pass


class DegenerateInput(GprError):
    pass


Posterior = namedtuple("Posterior", "mean variance")


class KernelParams(namedtuple("KernelParams", "signal_variance length_scales nugget")):
    __slots__ = ()

    def __new__(cls, signal_variance=1.0, length_scales=(1.0, 1.0, 1.0), nugget=NUGGET_START):
        length_scales = tuple(float(v) for v in length_scales)
        if not signal_variance > 0:
            raise ValueError(f"signal_variance must be positive, got {signal_variance!r}")
        if not length_scales or not all(v > 0 for v in length_scales):
            raise ValueError(f"length scales must all be positive, got {length_scales!r}")
        if not nugget >= 0:
            raise ValueError(f"nugget must be non-negative, got {nugget!r}")
        return super().__new__(cls, float(signal_variance), length_scales, float(nugget))


def _as_matrix(points):
    return np.atleast_2d(np.asarray([tuple(p) for p in points], dtype=float))


def kernel_matrix(a, b, params):
    """Squared-exponential covariance between the rows of `a` and `b`."""
    scales = np.asarray(params.length_scales)
    a = np.asarray(a, dtype=float) / scales
    b = np.asarray(b, dtype=float) / scales
    distances = cdist(a, b, "sqeuclidean")
    return params.signal_variance * np.exp(-0.5 * distances)


def kernel_eval(a, b, params):
    return float(kernel_matrix(_as_matrix([a]), _as_matrix([b]), params)[0, 0])


class TrainingSet:
    """Observed targets with their variance estimates and the noise weight lambda."""

    def __init__(self, inputs, targets, noise_variances=None, noise_weight=0.0):
        self.points = tuple(inputs)
        self.inputs = _as_matrix(self.points) if self.points else np.empty((0, 0))
        self.targets = np.array(targets, dtype=float).ravel()
        if noise_variances is None:
            noise_variances = np.zeros(len(self.targets))
        self.noise_variances = np.array(noise_variances, dtype=float).ravel()
        self.noise_weight = float(noise_weight)
        n = len(self.points)
        if n < 1:
            raise ValueError("a training set needs at least one observation")
        if len(self.targets) != n or len(self.noise_variances) != n:
            raise ValueError(
                f"inputs, targets and noise variances differ in length "
                f"({n}, {len(self.targets)}, {len(self.noise_variances)})"
            )
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")
        if np.any(self.noise_variances < 0) or not np.all(np.isfinite(self.noise_variances)):
            raise ValueError("noise variances must be finite and non-negative")
        if not self.noise_weight >= 0:
            raise ValueError(f"noise weight must be non-negative, got {noise_weight!r}")
        for array in (self.inputs, self.targets, self.noise_variances):
            array.flags.writeable = False

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"<TrainingSet n={len(self)} lambda={self.noise_weight:g}>"

    @property
    def dimension(self):
        return self.inputs.shape[1]

    @property
    def diagonal_noise(self):
        return self.noise_weight * self.noise_variances

    def with_noise_weight(self, noise_weight):
        return TrainingSet(self.points, self.targets, self.noise_variances, noise_weight)

    def standardization(self):
        """Return (mean, scale); the scale is 1 when all targets are equal."""
        mean = float(np.mean(self.targets))
        if np.all(self.targets == self.targets[0]):
            return mean, 1.0
        return mean, float(np.std(self.targets))

    def standardized_targets(self):
        mean, scale = self.standardization()
        return (self.targets - mean) / scale

    def standardized_noise(self):
        """lambda * sigma^2 in the units of the standardized targets."""
        _, scale = self.standardization()
        return self.diagonal_noise / scale ** 2


def default_kernel(training):
    """Unit signal variance and length scales equal to the span of the inputs."""
    spans = np.ptp(training.inputs, axis=0)
    spans[spans == 0] = 1.0
    return KernelParams(1.0, spans, NUGGET_START)


def regularized_matrix(training, kernel, nugget=None):
    nugget = kernel.nugget if nugget is None else nugget
    matrix = kernel_matrix(training.inputs, training.inputs, kernel)
    matrix[np.diag_indices_from(matrix)] += training.standardized_noise() + nugget
    return matrix


def _check_degenerate(training, kernel):
    if kernel.nugget > 0:
        return
    noise = training.diagonal_noise
    for i in range(len(training)):
        for j in range(i):
            if (
                noise[i] == noise[j] == 0
                and np.array_equal(training.inputs[i], training.inputs[j])
                and training.targets[i] != training.targets[j]
            ):
                raise DegenerateInput(
                    f"noise-free duplicate input {training.points[i]} has differing targets "
                    f"{training.targets[j]!r} and {training.targets[i]!r}"
                )


def factorize(training, kernel):
    """Cholesky factor of K_new, escalating the nugget tenfold on failure.

    Returns (factor, nugget actually used).
    """
    nugget = kernel.nugget
    while True:
        try:
            factor = cholesky(regularized_matrix(training, kernel, nugget), lower=True)
            return factor, nugget
        except LinAlgError:
            escalated = max(nugget * 10, NUGGET_START)
            if escalated > NUGGET_MAX * (1 + 1e-9):
                raise FactorizationFailure(
                    f"kernel matrix of {len(training)} points is not positive definite "
                    f"with nugget {nugget:g}"
                ) from None
            log.debug(f"factorization failed with nugget {nugget:g}, retrying with {escalated:g}")
            nugget = escalated


def _log_marginal_likelihood(training, kernel, standardized):
    factor, _ = factorize(training, kernel)
    alpha = cho_solve((factor, True), standardized)
    return float(
        -0.5 * standardized @ alpha
        - np.sum(np.log(np.diag(factor)))
        - 0.5 * len(training) * np.log(2 * np.pi)
    )


def log_marginal_likelihood(training, kernel):
    """Gaussian log evidence of the standardized targets under K_new."""
    return _log_marginal_likelihood(training, kernel, training.standardized_targets())


def _hyperparameter_bounds(training):
    spans = np.ptp(training.inputs, axis=0)
    spans[spans == 0] = 1.0
    low = np.concatenate([[LOG_RANGE[0]], LOG_RANGE[0] + np.log(spans)])
    high = np.concatenate([[LOG_RANGE[1]], LOG_RANGE[1] + np.log(spans)])
    return low, high


def optimize_hyperparameters(training, kernel_init):
    """Maximize the log evidence over signal variance and length scales.

    Nelder-Mead from the initial kernel plus seeded uniform starts in log space;
    the nugget stays at its initial value.
    """
    standardized = training.standardized_targets()
    low, high = _hyperparameter_bounds(training)

    def unpack(theta):
        return KernelParams(np.exp(theta[0]), np.exp(theta[1:]), kernel_init.nugget)

    def objective(theta):
        try:
            return -_log_marginal_likelihood(training, unpack(theta), standardized)
        except FactorizationFailure:
            return 1e25

    rng = np.random.default_rng(HYPERPARAMETER_SEED)
    initial = np.log(np.concatenate([[kernel_init.signal_variance], kernel_init.length_scales]))
    starts = [np.clip(initial, low, high)] + [rng.uniform(low, high) for _ in range(RESTARTS - 1)]
    best = None
    for start in starts:
        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(zip(low, high)),
            options=dict(xatol=1e-4, fatol=1e-9, maxiter=300 * len(start)),
        )
        log.debug(f"hyperparameter restart from {np.round(start, 3)}: -lml={result.fun:.6g}")
        if best is None or result.fun < best.fun:
            best = result
    return unpack(best.x)


class GprModel:
    """A fitted Gaussian process. Immutable; use `fit` to build one."""

    def __init__(self, training, kernel, target_mean, target_scale, factorization, alpha):
        self.training = training
        self.kernel = kernel
        self.target_mean = target_mean
        self.target_scale = target_scale
        self.factorization = factorization
        self.alpha = alpha
        self.factorization.flags.writeable = False
        self.alpha.flags.writeable = False

    def __repr__(self):
        return (
            f"<GprModel n={len(self.training)} signal_variance={self.kernel.signal_variance:.4g} "
            f"length_scales={tuple(round(v, 4) for v in self.kernel.length_scales)}>"
        )

    def predict(self, query):
        return predict(self, query)

    def predict_many(self, points):
        return predict_many(self, points)


def fit(training, kernel_init=None, optimize_hyperparams=False):
    if kernel_init is None:
        kernel_init = default_kernel(training)
    if len(kernel_init.length_scales) != training.dimension:
        raise ValueError(
            f"kernel has {len(kernel_init.length_scales)} length scales for "
            f"{training.dimension}-dimensional inputs"
        )
    _check_degenerate(training, kernel_init)
    kernel = kernel_init
    if optimize_hyperparams:
        kernel = optimize_hyperparameters(training, kernel_init)
    factor, nugget = factorize(training, kernel)
    if nugget != kernel.nugget:
        log.warning(f"nugget escalated from {kernel.nugget:g} to {nugget:g} to factorize")
        kernel = kernel._replace(nugget=nugget)
    target_mean, target_scale = training.standardization()
    alpha = cho_solve((factor, True), training.standardized_targets())
    model = GprModel(training, kernel, target_mean, target_scale, factor, alpha)
    log.debug(f"fitted {model}")
    return model


def predict_many(model, points):
    """Posterior means and variances (target units) at each row of `points`."""
    queries = np.asarray(points, dtype=float)
    k_star = kernel_matrix(queries, model.training.inputs, model.kernel)
    means = k_star @ model.alpha
    v = solve_triangular(model.factorization, k_star.T, lower=True)
    variances = np.maximum(model.kernel.signal_variance - np.sum(v * v, axis=0), 0.0)
    return (
        means * model.target_scale + model.target_mean,
        variances * model.target_scale ** 2,
    )


def predict(model, query):
    means, variances = predict_many(model, _as_matrix([query]))
    return Posterior(float(means[0]), float(variances[0]))
