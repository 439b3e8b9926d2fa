"""Expected improvement, the weighted combination over the accept and reject
surrogates, and its maximization over a box of process parameters.

EI here is the maximization form: both objectives (TP_n and TN_n) are to be
made as large as possible.
"""
import itertools
import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from ..plant.params import ParameterPoint
from .gpr import predict, predict_many

log = logging.getLogger(__name__)

GRID_RESOLUTION = 32
REFINE_TOP = 5
CHUNK_SIZE = 4096
WEIGHT_TOLERANCE = 1e-12


class SearchSpace:
    """A box of parameter points, bounds inclusive."""

    def __init__(self, lower, upper):
        self.lower = ParameterPoint.from_sequence(lower)
        self.upper = ParameterPoint.from_sequence(upper)
        for name, low, high in zip(ParameterPoint._fields, self.lower, self.upper):
            if low > high:
                raise ValueError(
                    f"search space lower bound {low} exceeds upper bound {high} for {name}"
                )

    def __repr__(self):
        return f"<SearchSpace {self.lower} .. {self.upper}>"

    def __eq__(self, other):
        if not isinstance(other, SearchSpace):
            return NotImplemented
        return (self.lower, self.upper) == (other.lower, other.upper)

    @property
    def bounds(self):
        return list(zip(self.lower, self.upper))

    @property
    def lower_array(self):
        return self.lower.as_array()

    @property
    def upper_array(self):
        return self.upper.as_array()

    def contains(self, point):
        return all(low <= v <= high for v, (low, high) in zip(point, self.bounds))

    def grid(self, resolution):
        """Regular grid in lexicographic order; a flat dimension contributes one value."""
        axes = [
            np.linspace(low, high, resolution) if high > low else np.array([low])
            for low, high in self.bounds
        ]
        return np.array(list(itertools.product(*axes)), dtype=float)


class CombinedWeights(namedtuple("CombinedWeights", "w_accept w_reject")):
    __slots__ = ()

    def __new__(cls, w_accept=0.5, w_reject=None):
        if w_reject is None:
            w_reject = 1.0 - w_accept
        w_accept, w_reject = float(w_accept), float(w_reject)
        for name, value in (("w_accept", w_accept), ("w_reject", w_reject)):
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value!r}")
        if abs(w_accept + w_reject - 1) > WEIGHT_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {w_accept} + {w_reject}")
        return super().__new__(cls, w_accept, w_reject)

    @classmethod
    def parse(cls, text):
        """Parse "wa,wr" as given on the command line."""
        try:
            values = [float(part) for part in text.split(",")]
        except ValueError:
            raise ValueError(f"invalid weights {text!r}") from None
        if len(values) != 2:
            raise ValueError(f"expected two weights (accept,reject), got {text!r}")
        return cls(*values)

    def __str__(self):
        return f"{self.w_accept:g}/{self.w_reject:g}"


class AcquisitionState(namedtuple("AcquisitionState", "best_accept best_reject")):
    """The best observed mean TP_n and TN_n so far."""

    __slots__ = ()

    def __new__(cls, best_accept, best_reject):
        for name, value in (("best_accept", best_accept), ("best_reject", best_reject)):
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value!r}")
        return super().__new__(cls, float(best_accept), float(best_reject))

    @classmethod
    def from_records(cls, records):
        return cls(max(r.tp_n_mean for r in records), max(r.tn_n_mean for r in records))


def expected_improvement_array(means, variances, f_best):
    means = np.asarray(means, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variances, dtype=float), 0.0))
    means, sigma = np.broadcast_arrays(means, sigma)
    delta = means - f_best
    improvement = np.maximum(delta, 0.0)
    uncertain = sigma > 0
    z = delta[uncertain] / sigma[uncertain]
    improvement[uncertain] = delta[uncertain] * norm.cdf(z) + sigma[uncertain] * norm.pdf(z)
    return np.maximum(improvement, 0.0)


def expected_improvement(posterior, f_best):
    return float(expected_improvement_array([posterior.mean], [posterior.variance], f_best)[0])


def combined_ei_array(points, model_accept, model_reject, state, weights):
    """w_accept * EI_accept + w_reject * EI_reject at each row of `points`.

    A model with zero weight is never evaluated and may be None.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(len(points))
    if weights.w_accept:
        means, variances = predict_many(model_accept, points)
        total += weights.w_accept * expected_improvement_array(means, variances, state.best_accept)
    if weights.w_reject:
        means, variances = predict_many(model_reject, points)
        total += weights.w_reject * expected_improvement_array(means, variances, state.best_reject)
    return total


def combined_ei(x, model_accept, model_reject, state, weights):
    total = 0.0
    if weights.w_accept:
        accept = expected_improvement(predict(model_accept, x), state.best_accept)
        total += weights.w_accept * accept
    if weights.w_reject:
        reject = expected_improvement(predict(model_reject, x), state.best_reject)
        total += weights.w_reject * reject
    return total


def evaluate_in_chunks(objective, points, workers=1):
    """Evaluate a vectorised objective over fixed-size chunks.

    The chunking does not depend on `workers`, so serial and threaded runs
    produce identical values.
    """
    chunks = [points[i : i + CHUNK_SIZE] for i in range(0, len(points), CHUNK_SIZE)]  # noqa: E203
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(objective, chunks))
    else:
        values = [objective(chunk) for chunk in chunks]
    return np.concatenate(values)


def _refine(objective, start, space):
    lower, upper = space.lower_array, space.upper_array
    free = np.flatnonzero(upper > lower)
    point = start.copy()
    if free.size:

        def negative(z):
            candidate = start.copy()
            candidate[free] = z
            return -float(objective(candidate[None, :])[0])

        result = minimize(
            negative,
            start[free],
            method="Nelder-Mead",
            bounds=list(zip(lower[free], upper[free])),
            options=dict(xatol=1e-6, fatol=1e-12, maxiter=400 * free.size),
        )
        point[free] = np.clip(result.x, lower[free], upper[free])
    return float(objective(point[None, :])[0]), point


def maximize(objective, space, resolution=GRID_RESOLUTION, top=REFINE_TOP, workers=1):
    """Grid search then Nelder-Mead refinement from the best grid points.

    `objective` maps an (m, 3) array to m values. Returns (point, value) with
    ties going to the lexicographically smallest point.
    """
    grid = space.grid(resolution)
    values = evaluate_in_chunks(objective, grid, workers)
    order = np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], -values))[:top]
    candidates = [(float(values[i]), grid[i]) for i in order]
    for i in order:
        candidates.append(_refine(objective, grid[i], space))
    value, point = min(candidates, key=lambda c: (-c[0], tuple(c[1])))
    log.debug(f"maximum {value:.6g} at {np.round(point, 4)} from {len(grid)} grid points")
    return ParameterPoint.from_sequence(point), value


def maximize_combined_ei(
    models, state, weights, space, resolution=GRID_RESOLUTION, top=REFINE_TOP, workers=1
):
    model_accept, model_reject = models

    def objective(points):
        return combined_ei_array(points, model_accept, model_reject, state, weights)

    return maximize(objective, space, resolution, top, workers)


def round_to_actuation(x, space=None):
    """Round to the plant's integer settings (halves away from zero), kept inside `space`."""
    rounded = [math.copysign(math.floor(abs(v) + 0.5), v) for v in x]
    if space is not None:
        clamped = []
        for v, (low, high) in zip(rounded, space.bounds):
            low_int, high_int = math.ceil(low), math.floor(high)
            if low_int <= high_int:
                low, high = low_int, high_int
            clamped.append(min(max(v, low), high))
        rounded = clamped
    return ParameterPoint.from_sequence(rounded)
