"""Run configuration from an INI file.

    [simulator]     any SimulatorConfig field, ranges written "4, 10"
    [experiment]    duration_s, interval_s, workers
    [optimization]  initial_design (grid syntax), weights "wa, wr", noise_weight,
                    search_margin, max_steps, convergence_tol, convergence_patience,
                    ei_floor, resolution
    [sweep]         grid (grid syntax)

The seed comes from the command line, else the SORTOPT_SEED environment
variable, else [simulator] seed, else 0.
"""
import configparser
import logging
import os

from ..optimizer.design import DEFAULT_SWEEP_GRID, build_initial_design, parse_grid
from ..optimizer.loop import OptimizationConfig
from ..plant.simulator import ConfigError, SimulatorConfig
from ..surrogate.acquisition import CombinedWeights

log = logging.getLogger(__name__)

SEED_VARIABLE = "SORTOPT_SEED"


def _pair(text):
    values = [float(v) for v in text.split(",")]
    if len(values) != 2:
        raise ValueError(f"expected 'min, max', got {text!r}")
    return tuple(values)


def _integer(text):
    try:
        return int(text)
    except ValueError:
        value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _converter(default):
    if isinstance(default, tuple):
        return _pair
    if isinstance(default, int):
        return _integer
    return float


SIMULATOR_KEYS = {name: _converter(v) for name, v in SimulatorConfig.DEFAULTS.items()}

EXPERIMENT_KEYS = dict(duration_s=float, interval_s=float, workers=_integer)

OPTIMIZATION_KEYS = dict(
    initial_design=lambda text: build_initial_design(parse_grid(text)),
    weights=CombinedWeights.parse,
    noise_weight=float,
    search_margin=float,
    max_steps=_integer,
    convergence_tol=float,
    convergence_patience=_integer,
    ei_floor=float,
    resolution=_integer,
)

SWEEP_KEYS = dict(grid=parse_grid)

SECTIONS = dict(
    simulator=SIMULATOR_KEYS,
    experiment=EXPERIMENT_KEYS,
    optimization=OPTIMIZATION_KEYS,
    sweep=SWEEP_KEYS,
)


class RunConfig:
    """Everything a command needs: the plant, the experiment protocol and the optimizer."""

    def __init__(self, simulator, optimization, grid=DEFAULT_SWEEP_GRID):
        self.simulator = simulator
        self.optimization = optimization
        self.grid = grid

    def __repr__(self):
        return f"<RunConfig {self.simulator!r} {self.optimization!r}>"

    @property
    def duration_s(self):
        return self.optimization.duration_s

    @property
    def interval_s(self):
        return self.optimization.interval_s

    @property
    def workers(self):
        return self.optimization.workers


def read_sections(path):
    """Parse and convert every key of the file into {section: {key: value}}."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as file:
            parser.read_file(file)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        keys = SECTIONS[section]
        values[section] = {}
        for key, text in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            try:
                values[section][key] = keys[key](text)
            except ValueError as e:
                raise ConfigError(f"invalid value for {key!r} in [{section}]: {e}") from None
    return values


def resolve_seed(seed=None, file_seed=None):
    if seed is not None:
        return seed
    env_seed = os.environ.get(SEED_VARIABLE)
    if env_seed:
        try:
            return int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_VARIABLE} must be an integer, got {env_seed!r}") from None
    if file_seed is not None:
        return file_seed
    return 0


def load_config(path=None, seed=None, workers=None):
    values = read_sections(path) if path else {}
    simulator_options = dict(values.get("simulator", {}))
    simulator_options["seed"] = resolve_seed(seed, simulator_options.get("seed"))
    simulator = SimulatorConfig(**simulator_options)

    optimization_options = dict(values.get("experiment", {}))
    optimization_options.update(values.get("optimization", {}))
    if workers is not None:
        optimization_options["workers"] = workers
    optimization = OptimizationConfig(**optimization_options)

    grid = values.get("sweep", {}).get("grid", DEFAULT_SWEEP_GRID)
    config = RunConfig(simulator, optimization, grid)
    log.debug(f"loaded {config} from {path or 'defaults'}")
    return config
