"""Confusion matrix accounting and sorting quality statistics.

The accept class is the positive class. Rows are the actual class: an accept
object is a true positive when retained and a false negative when ejected, a
reject object is a true negative when ejected and a false positive when retained.
TP_n and TN_n are therefore the recall of the accept and the reject class.
"""
import logging
import math
from collections import namedtuple

import numpy as np
from scipy.stats import beta

from .params import ParameterPoint

log = logging.getLogger(__name__)

UNDEFINED = None


class MetricsError(ValueError):
    pass


class EmptyMatrix(MetricsError):
    pass


class InsufficientIntervals(MetricsError):
    pass


class DegenerateFit(MetricsError):
    pass


class ConfusionMatrix(namedtuple("ConfusionMatrix", "tp fn fp tn")):
    __slots__ = ()

    def __new__(cls, tp=0, fn=0, fp=0, tn=0):
        counts = []
        for name, value in zip(cls._fields, (tp, fn, fp, tn)):
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer count, got {value!r}")
            counts.append(int(value))
        return super().__new__(cls, *counts)

    @property
    def n_total(self):
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other):
        return ConfusionMatrix(*(a + b for a, b in zip(self, other)))


class IntervalResult(namedtuple("IntervalResult", "confusion duration_s")):
    """The confusion matrix counted over one measurement interval."""

    __slots__ = ()

    def __new__(cls, confusion, duration_s):
        if not duration_s > 0:
            raise ValueError(f"interval duration must be positive, got {duration_s!r}")
        return super().__new__(cls, confusion, float(duration_s))

    def to_json(self):
        return dict(self.confusion._asdict(), duration_s=self.duration_s)

    @classmethod
    def from_json(cls, data):
        confusion = ConfusionMatrix(data["tp"], data["fn"], data["fp"], data["tn"])
        return cls(confusion, data["duration_s"])


def accuracy(m):
    if m.n_total == 0:
        raise EmptyMatrix("accuracy is undefined for an empty confusion matrix")
    return (m.tp + m.tn) / m.n_total


def normalized_rates(m):
    """Return (TP_n, TN_n); a rate with an empty denominator is UNDEFINED."""
    accept_total = m.tp + m.fn
    reject_total = m.tn + m.fp
    tp_n = m.tp / accept_total if accept_total else UNDEFINED
    tn_n = m.tn / reject_total if reject_total else UNDEFINED
    return tp_n, tn_n


def accuracy_variance(p, n_total):
    """Binomial variance of an accuracy estimate over n_total objects."""
    if not 0 <= p <= 1:
        raise ValueError(f"accuracy rate must be in [0, 1], got {p!r}")
    if n_total < 1:
        raise ValueError(f"n_total must be at least 1, got {n_total!r}")
    return p * (1 - p) / n_total


def rate_confidence_interval(successes, trials, alpha=0.05):
    """Clopper-Pearson interval for a normalized rate such as TP_n."""
    if trials <= 0:
        raise ValueError("a confidence interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside [0, {trials}]")
    low = beta.ppf(alpha / 2, successes, trials - successes + 1) if successes else 0.0
    high = beta.ppf(1 - alpha / 2, successes + 1, trials - successes) if successes < trials else 1.0
    return float(low), float(high)


def mean_and_variance(values):
    """Mean and unbiased sample variance of at least two values."""
    n = len(values)
    if n < 2:
        raise ValueError(f"a sample variance needs at least 2 values, got {n}")
    if all(v == values[0] for v in values):
        return float(values[0]), 0.0
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, variance


class ExperimentRecord:
    """One sorting experiment: the actuated parameters and what was measured."""

    def __init__(
        self, params, intervals, tp_n_mean, tn_n_mean, tp_n_var, tn_n_var, timestamp=0.0
    ):
        self.params = params
        self.intervals = list(intervals)
        self.tp_n_mean = tp_n_mean
        self.tn_n_mean = tn_n_mean
        self.tp_n_var = tp_n_var
        self.tn_n_var = tn_n_var
        self.timestamp = timestamp

    def __repr__(self):
        return (
            f"<ExperimentRecord params={self.params} tp_n={self.tp_n_mean:.4f} "
            f"tn_n={self.tn_n_mean:.4f}>"
        )

    def __eq__(self, other):
        if not isinstance(other, ExperimentRecord):
            return NotImplemented
        return self.to_json() == other.to_json()

    @property
    def confusion(self):
        total = ConfusionMatrix()
        for interval in self.intervals:
            total = total + interval.confusion
        return total

    @property
    def duration_s(self):
        return math.fsum(interval.duration_s for interval in self.intervals)

    def score(self, weights):
        return weights.w_accept * self.tp_n_mean + weights.w_reject * self.tn_n_mean

    def to_json(self):
        return dict(
            params=list(self.params),
            intervals=[interval.to_json() for interval in self.intervals],
            tp_n_mean=self.tp_n_mean,
            tn_n_mean=self.tn_n_mean,
            tp_n_var=self.tp_n_var,
            tn_n_var=self.tn_n_var,
            timestamp=self.timestamp,
        )

    @classmethod
    def from_json(cls, data):
        return cls(
            ParameterPoint.from_sequence(data["params"]),
            [IntervalResult.from_json(interval) for interval in data["intervals"]],
            data["tp_n_mean"],
            data["tn_n_mean"],
            data["tp_n_var"],
            data["tn_n_var"],
            data.get("timestamp", 0.0),
        )


def aggregate_experiment(params, intervals, timestamp=0.0):
    """Average the per-interval normalized rates of one experiment.

    Intervals whose rate is undefined are left out of that objective's
    statistics only. Variances are unbiased sample variances.
    """
    intervals = list(intervals)
    rates = [normalized_rates(interval.confusion) for interval in intervals]
    tp_rates = [tp_n for tp_n, _ in rates if tp_n is not UNDEFINED]
    tn_rates = [tn_n for _, tn_n in rates if tn_n is not UNDEFINED]
    if len(tp_rates) < 2 or len(tn_rates) < 2:
        raise InsufficientIntervals(
            f"need 2 intervals with defined rates per objective, got {len(tp_rates)} for "
            f"TP_n and {len(tn_rates)} for TN_n at {params}"
        )
    tp_n_mean, tp_n_var = mean_and_variance(tp_rates)
    tn_n_mean, tn_n_var = mean_and_variance(tn_rates)
    log.debug(
        f"aggregated {len(intervals)} intervals at {params}: TP_n={tp_n_mean:.4f} "
        f"(var {tp_n_var:.3g}), TN_n={tn_n_mean:.4f} (var {tn_n_var:.3g})"
    )
    return ExperimentRecord(
        params, intervals, tp_n_mean, tn_n_mean, tp_n_var, tn_n_var, timestamp
    )


def rebucket(intervals, factor):
    """Merge consecutive groups of `factor` intervals; an incomplete tail is dropped."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"rebucket factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    merged = []
    for start in range(0, len(intervals) - factor + 1, factor):
        group = intervals[start : start + factor]  # noqa: E203
        confusion = ConfusionMatrix()
        for interval in group:
            confusion = confusion + interval.confusion
        merged.append(IntervalResult(confusion, math.fsum(i.duration_s for i in group)))
    return merged


def variance_scaling_fit(series):
    """Least-squares slope of log(variance) against log(interval length).

    Binomial counting noise gives a slope of -1.
    """
    series = list(series)
    if len(series) < 3:
        raise ValueError(f"a variance scaling fit needs at least 3 points, got {len(series)}")
    t = np.array([point[0] for point in series], dtype=float)
    var = np.array([point[1] for point in series], dtype=float)
    if np.any(t <= 0) or np.any(var <= 0):
        raise ValueError("interval lengths and variances must be positive")
    if np.all(t == t[0]):
        raise DegenerateFit("all interval lengths are equal")
    slope, _ = np.polyfit(np.log(t), np.log(var), 1)
    return float(slope)


def variance_series(intervals, widths, objective="accept"):
    """Sample variance of interval TP_n (or TN_n for "reject") at each interval width.

    Widths that are not a whole multiple of the recorded interval length, or
    that leave fewer than two defined rates, are skipped with a warning.
    Returns a list of (width, variance, bucket count).
    """
    index = {"accept": 0, "reject": 1}[objective]
    if not intervals:
        raise InsufficientIntervals("no intervals to re-bucket")
    base = intervals[0].duration_s
    series = []
    for width in widths:
        factor = width / base
        if factor < 1 or abs(factor - round(factor)) > 1e-9:
            log.warning(f"skipping {width:g}s: not a multiple of the {base:g}s interval")
            continue
        buckets = rebucket(intervals, int(round(factor)))
        rates = [normalized_rates(bucket.confusion)[index] for bucket in buckets]
        rates = [rate for rate in rates if rate is not UNDEFINED]
        if len(rates) < 2:
            log.warning(f"skipping {width:g}s: only {len(rates)} defined rates")
            continue
        series.append((float(width), mean_and_variance(rates)[1], len(buckets)))
    return series
