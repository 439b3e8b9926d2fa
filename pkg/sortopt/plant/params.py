import math
from collections import namedtuple

import numpy as np

FIELDS = ("reaction_lines", "extended_time", "extended_space")


class ParameterPoint(namedtuple("ParameterPoint", FIELDS)):
    """A sorting process configuration.

    `reaction_lines` (T_R) and `extended_time` (T_E) are in camera lines,
    `extended_space` (S_E) is in pixels. Points order lexicographically, which is
    the tie-break rule used throughout the optimizer.
    """

    __slots__ = ()

    def __new__(cls, reaction_lines, extended_time=0.0, extended_space=0.0):
        values = [float(v) for v in (reaction_lines, extended_time, extended_space)]
        for name, value in zip(FIELDS, values):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
        return super().__new__(cls, *values)

    @classmethod
    def from_sequence(cls, values):
        values = list(values)
        if len(values) != len(FIELDS):
            raise ValueError(f"expected {len(FIELDS)} parameter values, got {len(values)}")
        return cls(*values)

    @classmethod
    def parse(cls, text):
        """Parse "tr,et,se" as given on the command line."""
        try:
            values = [float(part) for part in text.split(",")]
        except ValueError:
            raise ValueError(f"invalid parameter point {text!r}") from None
        return cls.from_sequence(values)

    def as_array(self):
        return np.array(self, dtype=float)

    @property
    def is_integral(self):
        return all(float(v).is_integer() for v in self)

    def __str__(self):
        return "[" + ", ".join(f"{v:g}" for v in self) + "]"
