import itertools

from ..plant.params import ParameterPoint
from ..surrogate.acquisition import SearchSpace

DEFAULT_DESIGN_GRID = ((12, 18, 21), (0, 8), (0, 8))
DEFAULT_SWEEP_GRID = (tuple(range(12, 22)), (0, 2, 4, 6, 8), (0, 2, 4, 6, 8))


def build_initial_design(grid):
    """Cartesian product of the per-dimension value sets, in lexicographic order."""
    grid = [sorted(set(float(v) for v in values)) for values in grid]
    if len(grid) != len(ParameterPoint._fields):
        raise ValueError(f"expected {len(ParameterPoint._fields)} value sets, got {len(grid)}")
    for name, values in zip(ParameterPoint._fields, grid):
        if not values:
            raise ValueError(f"no values given for {name}")
    return [ParameterPoint(*values) for values in itertools.product(*grid)]


def derive_search_space(design, margin=1.0):
    """The design's bounding box grown by `margin` per side, floored at zero."""
    design = list(design)
    if not design:
        raise ValueError("cannot derive a search space from an empty design")
    lower = [max(min(values) - margin, 0.0) for values in zip(*design)]
    upper = [max(values) + margin for values in zip(*design)]
    return SearchSpace(lower, upper)


def parse_grid(text):
    """Parse a grid such as "12:21;0,8;0:8:2".

    Dimensions are separated by semicolons; each is a comma list of values or
    an inclusive range start:stop[:step].
    """
    dimensions = [part.strip() for part in text.split(";")]
    if len(dimensions) != len(ParameterPoint._fields):
        raise ValueError(
            f"grid {text!r} needs {len(ParameterPoint._fields)} ';'-separated dimensions"
        )
    grid = []
    for dimension in dimensions:
        try:
            if ":" in dimension:
                start, stop, *step = (float(v) for v in dimension.split(":"))
                step = step[0] if step else 1.0
                if step <= 0 or len(dimension.split(":")) > 3:
                    raise ValueError()
                count = int(round((stop - start) / step))
                values = [start + i * step for i in range(count + 1) if start + i * step <= stop]
            else:
                values = [float(v) for v in dimension.split(",")]
        except ValueError:
            raise ValueError(f"invalid grid dimension {dimension!r}") from None
        if not values:
            raise ValueError(f"grid dimension {dimension!r} is empty")
        grid.append(values)
    return grid
