"""A seedable virtual sensor-based sorting plant.

Time is measured in camera lines: an object first seen at line y reaches the
nozzle bar `true_transit_lines + nozzle_delay_lines` lines later (plus jitter),
while the nozzle controller fires over the object's (extended) bounding box
shifted by the configured reaction lines T_R. An object leaves in the reject
stream when the pulses cover enough of its footprint at the nozzle bar.
"""
import bisect
import logging
import math
from collections import namedtuple

import numpy as np

from .base import Plant
from .metrics import ConfusionMatrix, IntervalResult
from .params import ParameterPoint

log = logging.getLogger(__name__)

ACCEPT = "accept"
REJECT = "reject"


class ConfigError(ValueError):
    pass


BoundingBox = namedtuple("BoundingBox", "x_min y_min x_max y_max")

SimObject = namedtuple("SimObject", "class_label bbox arrival_line")


class SimulatorConfig:
    """The virtual plant. Lines convert to seconds through `line_frequency`."""

    DEFAULTS = dict(
        line_frequency=200.0,
        belt_speed=1.0,
        nozzle_pitch=4,
        nozzle_count=32,
        nozzle_delay_lines=3.0,
        jitter_std_lines=0.7,
        true_transit_lines=12.0,
        lateral_drift_std_pixels=3.0,
        arrival_rate_accept=20.0,
        arrival_rate_reject=5.0,
        object_length_lines=(4.0, 10.0),
        object_width_pixels=(6.0, 16.0),
        belt_width_pixels=128,
        hit_coverage_threshold=0.5,
        seed=0,
    )

    def __init__(self, **options):
        unknown = set(options) - set(self.DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown simulator option {sorted(unknown)[0]!r}")
        for name, default in self.DEFAULTS.items():
            setattr(self, name, options.get(name, default))
        self.object_length_lines = tuple(float(v) for v in self.object_length_lines)
        self.object_width_pixels = tuple(float(v) for v in self.object_width_pixels)
        self.validate()

    @classmethod
    def from_mapping(cls, mapping):
        return cls(**dict(mapping))

    def replace(self, **changes):
        options = self.as_dict()
        options.update(changes)
        return type(self)(**options)

    def as_dict(self):
        return {name: getattr(self, name) for name in self.DEFAULTS}

    def __repr__(self):
        return f"<SimulatorConfig seed={self.seed} rates={self.arrival_rates}>"

    def __eq__(self, other):
        return isinstance(other, SimulatorConfig) and self.as_dict() == other.as_dict()

    @property
    def arrival_rates(self):
        return self.arrival_rate_accept, self.arrival_rate_reject

    def validate(self):
        def check(name, ok, requirement):
            if not ok:
                raise ConfigError(f"{name} must be {requirement}, got {getattr(self, name)!r}")

        check("line_frequency", self.line_frequency > 0, "positive")
        check("belt_speed", self.belt_speed > 0, "positive")
        check("nozzle_pitch", self.nozzle_pitch >= 1, "at least 1")
        check(
            "nozzle_count", int(self.nozzle_count) == self.nozzle_count >= 1, "a positive integer"
        )
        check("nozzle_delay_lines", math.isfinite(self.nozzle_delay_lines), "finite")
        check("jitter_std_lines", self.jitter_std_lines >= 0, "non-negative")
        check(
            "true_transit_lines",
            0 <= self.true_transit_lines < math.inf,
            "finite and non-negative",
        )
        check("lateral_drift_std_pixels", self.lateral_drift_std_pixels >= 0, "non-negative")
        check("arrival_rate_accept", self.arrival_rate_accept >= 0, "non-negative")
        check("arrival_rate_reject", self.arrival_rate_reject >= 0, "non-negative")
        check(
            "belt_width_pixels",
            int(self.belt_width_pixels) == self.belt_width_pixels >= 1,
            "a positive integer",
        )
        low, high = self.object_length_lines
        check("object_length_lines", 0 < low <= high, "a (min, max) range of positive lengths")
        low, high = self.object_width_pixels
        check(
            "object_width_pixels",
            0 < low <= high <= self.belt_width_pixels,
            "a (min, max) range of positive widths within the belt",
        )
        check("hit_coverage_threshold", 0 < self.hit_coverage_threshold <= 1, "in (0, 1]")
        check("seed", int(self.seed) == self.seed and 0 <= self.seed < 2 ** 64, "a 64-bit integer")


def lines_to_seconds(lines, config):
    return lines / config.line_frequency


def line_pitch_mm(config):
    """Belt travel between two camera lines, with `belt_speed` in m/s."""
    return 1000.0 * config.belt_speed / config.line_frequency


def effective_reaction(params, config, jitter_draw):
    """T_effective = T_R + nozzle delay + jitter, in lines.

    Works elementwise when `jitter_draw` is an array.
    """
    return params.reaction_lines + config.nozzle_delay_lines + jitter_draw


def extend_bounding_box(bbox, params, belt_width_pixels=None):
    """Grow a box by S_E across the belt and T_E along it, symmetrically.

    The lateral edges are clamped to the belt when its width is given.
    """
    half_space = params.extended_space / 2
    half_time = params.extended_time / 2
    x_min = bbox.x_min - half_space
    x_max = bbox.x_max + half_space
    if belt_width_pixels is not None:
        x_min = min(max(x_min, 0.0), belt_width_pixels)
        x_max = min(max(x_max, 0.0), belt_width_pixels)
    return BoundingBox(x_min, bbox.y_min - half_time, x_max, bbox.y_max + half_time)


def _draw_class(rng, label, rate, duration_s, config):
    count = rng.poisson(rate * duration_s)
    times = np.sort(rng.uniform(0.0, duration_s, count))
    lengths = rng.uniform(*config.object_length_lines, count)
    widths = rng.uniform(*config.object_width_pixels, count)
    offsets = rng.uniform(0.0, 1.0, count) * (config.belt_width_pixels - widths)
    for time, length, width, x_min in zip(times, lengths, widths, offsets):
        arrival_line = int(math.floor(time * config.line_frequency))
        y_min = float(arrival_line)
        bbox = BoundingBox(float(x_min), y_min, float(x_min + width), y_min + float(length))
        yield SimObject(label, bbox, arrival_line)


def generate_stream(config, duration_s):
    """Poisson arrivals of both classes over `duration_s`, ordered by arrival line."""
    if not duration_s > 0:
        raise ConfigError(f"stream duration must be positive, got {duration_s!r}")
    rng = np.random.default_rng([config.seed, 0])
    objects = []
    seen = set()
    for label, rate in ((ACCEPT, config.arrival_rate_accept), (REJECT, config.arrival_rate_reject)):
        for obj in _draw_class(rng, label, rate, duration_s, config):
            if obj.bbox in seen:
                continue
            seen.add(obj.bbox)
            objects.append(obj)
    objects.sort(key=lambda obj: (obj.arrival_line, obj.bbox.x_min, obj.class_label))
    return objects


def interval_count(duration_s, interval_s):
    if not duration_s > 0:
        raise ConfigError(f"experiment duration must be positive, got {duration_s!r}")
    if not interval_s > 0:
        raise ConfigError(f"measurement interval must be positive, got {interval_s!r}")
    count = round(duration_s / interval_s)
    if count < 1 or not math.isclose(count * interval_s, duration_s, rel_tol=1e-9):
        raise ConfigError(f"interval {interval_s}s does not divide duration {duration_s}s")
    return count


def _nozzle_range(x_min, x_max, config):
    first = max(0, int(math.floor(x_min / config.nozzle_pitch)))
    last = min(int(config.nozzle_count) - 1, int(math.ceil(x_max / config.nozzle_pitch)) - 1)
    return range(first, last + 1)


class ActivationMap:
    """Merged nozzle opening windows (in lines) per nozzle index."""

    def __init__(self):
        self._windows = {}
        self._merged = None

    def add(self, nozzle, start, end):
        self._windows.setdefault(nozzle, []).append((start, end))
        self._merged = None

    def __len__(self):
        return sum(len(windows) for windows in self._windows.values())

    def _merge(self):
        merged = {}
        for nozzle, windows in self._windows.items():
            starts, ends = [], []
            for start, end in sorted(windows):
                if starts and start <= ends[-1]:
                    ends[-1] = max(ends[-1], end)
                else:
                    starts.append(start)
                    ends.append(end)
            merged[nozzle] = (starts, ends)
        self._merged = merged

    def covered(self, nozzle, start, end):
        """Length of [start, end] during which `nozzle` is open."""
        if self._merged is None:
            self._merge()
        if nozzle not in self._merged:
            return 0.0
        starts, ends = self._merged[nozzle]
        total = 0.0
        k = bisect.bisect_right(ends, start)
        while k < len(starts) and starts[k] < end:
            total += min(ends[k], end) - max(starts[k], start)
            k += 1
        return total


def activation_map(objects, params, config):
    activations = ActivationMap()
    for obj in objects:
        if obj.class_label != REJECT:
            continue
        extended = extend_bounding_box(obj.bbox, params, config.belt_width_pixels)
        start = extended.y_min + params.reaction_lines
        end = extended.y_max + params.reaction_lines
        for nozzle in _nozzle_range(extended.x_min, extended.x_max, config):
            activations.add(nozzle, start, end)
    return activations


def footprint_coverage(x_min, x_max, start, end, activations, config):
    """Fraction of a space-time footprint at the nozzle bar hit by open nozzles.

    The footprint is first clipped to the belt; nothing of it left on the belt
    means no coverage.
    """
    x_min = max(x_min, 0.0)
    x_max = min(x_max, float(config.belt_width_pixels))
    if x_max <= x_min or end <= start:
        return 0.0
    area = (x_max - x_min) * (end - start)
    covered = 0.0
    for nozzle in _nozzle_range(x_min, x_max, config):
        cell_min = nozzle * config.nozzle_pitch
        width = min(x_max, cell_min + config.nozzle_pitch) - max(x_min, cell_min)
        if width > 0:
            covered += width * activations.covered(nozzle, start, end)
    return covered / area


def _normal_draws(rng, std, count):
    if not std:
        return np.zeros(count)
    return rng.normal(0.0, std, count)


def run_experiment(config, params, duration_s, interval_s):
    """Sort a generated stream with `params` and count the outcome per interval.

    Only objects whose whole nozzle-bar window lies inside the experiment are
    counted; each is bucketed by the start of that window.
    """
    intervals = interval_count(duration_s, interval_s)
    objects = generate_stream(config, duration_s)
    rng = np.random.default_rng([config.seed, 1])
    jitter = _normal_draws(rng, config.jitter_std_lines, len(objects))
    drift = _normal_draws(rng, config.lateral_drift_std_pixels, len(objects))
    # the object is under the nozzle bar when a controller tuned exactly to its transit would fire
    arrival_offsets = effective_reaction(ParameterPoint(config.true_transit_lines), config, jitter)
    activations = activation_map(objects, params, config)

    duration_lines = duration_s * config.line_frequency
    interval_lines = interval_s * config.line_frequency
    counts = [dict(tp=0, fn=0, fp=0, tn=0) for _ in range(intervals)]
    for obj, offset, shift in zip(objects, arrival_offsets, drift):
        start = obj.bbox.y_min + offset
        end = obj.bbox.y_max + offset
        if start < 0 or end > duration_lines:
            continue
        coverage = footprint_coverage(
            obj.bbox.x_min + shift, obj.bbox.x_max + shift, start, end, activations, config
        )
        ejected = coverage >= config.hit_coverage_threshold
        if obj.class_label == ACCEPT:
            outcome = "fn" if ejected else "tp"
        else:
            outcome = "tn" if ejected else "fp"
        counts[min(int(start // interval_lines), intervals - 1)][outcome] += 1

    log.debug(
        f"experiment at {params}: {len(objects)} objects, {len(activations)} nozzle activations "
        f"over {lines_to_seconds(duration_lines, config):g}s"
    )
    return [IntervalResult(ConfusionMatrix(**count), interval_s) for count in counts]


class SimulatorPlant(Plant):
    """Runs experiments on the virtual plant.

    Experiment `ordinal` k is seeded with (seed, k), so repeated experiments at
    the same point are independent measurements while whole runs stay reproducible.
    """

    def __init__(self, config):
        self.config = config

    def __repr__(self):
        return f"<SimulatorPlant seed={self.config.seed}>"

    def config_for(self, ordinal):
        entropy = [int(self.config.seed), int(ordinal)]
        state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
        return self.config.replace(seed=int(state[0]))

    def run(self, params, duration_s, interval_s, ordinal):
        return run_experiment(self.config_for(ordinal), params, duration_s, interval_s)
