import argparse
import logging
import math
import pathlib
import sys
from concurrent.futures import ProcessPoolExecutor

from colorama import Fore, init

from ..__version__ import __version__
from ..optimizer.design import build_initial_design, derive_search_space, parse_grid
from ..optimizer.ledger import Ledger, LedgerError
from ..optimizer.loop import fit_objective, reference_best, run, training_set, weight_study
from ..optimizer.reporter import ConsoleReporter
from ..plant.metrics import (
    MetricsError,
    accuracy,
    aggregate_experiment,
    rate_confidence_interval,
    variance_scaling_fit,
    variance_series,
)
from ..plant.params import ParameterPoint
from ..plant.replay import ReplayMissing, ReplayPlant
from ..plant.simulator import ConfigError, SimulatorPlant, line_pitch_mm
from ..surrogate.acquisition import CombinedWeights
from ..surrogate.gpr import GprError, fit, predict_many
from . import export
from .config import load_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

REPORT_MODES = ("variance_study", "surface", "ledger_csv", "boxplot")
# variance study interval lengths, in multiples of the recorded interval
VARIANCE_MULTIPLES = (1, 2, 4, 8)
SURFACE_NOISE_WEIGHTS = (0.0, 0.01, 0.1, 1.0)
SURFACE_FIT_NOISE_WEIGHT = 0.1


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class RunManifest:
    """Where a command reads its configuration and writes its files."""

    def __init__(
        self, command, config_path=None, seed_override=None, output_dir=".", force=False
    ):
        self.command = command
        self.config_path = config_path
        self.seed_override = seed_override
        self.output_dir = pathlib.Path(output_dir)
        self.force = force

    def __repr__(self):
        return f"<RunManifest {self.command} out={self.output_dir}>"

    @classmethod
    def from_args(cls, args):
        return cls(args.command, args.config, args.seed, args.out, args.force)

    @property
    def ledger_path(self):
        return self.output_dir / f"{self.command}.jsonl"

    def output_path(self, name):
        """A path in the output directory, refusing to replace an existing file without --force."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        if path.exists() and not self.force:
            raise UsageError(f"{path} already exists; use --force to overwrite it")
        return path

    def open_ledger(self):
        return Ledger.create(self.output_path(self.ledger_path.name))


def parse_value(parse, text, what):
    try:
        return parse(text)
    except ValueError as e:
        raise UsageError(f"invalid {what}: {e}") from None


def load_run_config(args):
    return load_config(args.config, seed=args.seed, workers=args.workers)


def command_weights(args, config):
    if args.weights is None:
        return config.optimization.weights
    return parse_value(CombinedWeights.parse, args.weights, "--weights")


def cmd_simulate(args):
    """Run one experiment at --params and record it."""
    manifest = RunManifest.from_args(args)
    config = load_run_config(args)
    params = parse_value(ParameterPoint.parse, args.params, "--params")
    ledger_path = manifest.output_path(manifest.ledger_path.name)
    plant = SimulatorPlant(config.simulator)
    intervals = plant.run(params, config.duration_s, config.interval_s, 0)
    record = aggregate_experiment(params, intervals)
    ledger = Ledger.create(ledger_path)
    ledger.append_record(record)

    confusion = record.confusion
    tp_low, tp_high = rate_confidence_interval(confusion.tp, confusion.tp + confusion.fn)
    tn_low, tn_high = rate_confidence_interval(confusion.tn, confusion.tn + confusion.fp)
    pitch = line_pitch_mm(config.simulator)
    print(
        f"Experiment at {params}: {len(intervals)} intervals of {config.interval_s:g}s "
        f"(line pitch {pitch:g} mm)"
    )
    print(_rate_line("TP_n", record.tp_n_mean, record.tp_n_var, tp_low, tp_high))
    print(_rate_line("TN_n", record.tn_n_mean, record.tn_n_var, tn_low, tn_high))
    print(f"  accuracy {accuracy(confusion):.4f} over {confusion.n_total} objects")
    print(f"Ledger written to {ledger.path}")
    return EXIT_OK


def sweep_point(job):
    """Run one sweep experiment; returns (intervals, None) or (None, error message)."""
    simulator, params, duration_s, interval_s, index = job
    try:
        intervals = SimulatorPlant(simulator).run(params, duration_s, interval_s, index)
        return intervals, None
    except Exception as e:
        return None, f"{type(e).__name__}: {e}"


def run_sweep(config, points, workers):
    jobs = [
        (config.simulator, params, config.duration_s, config.interval_s, index)
        for index, params in enumerate(points)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(sweep_point, jobs)
    else:
        yield from map(sweep_point, jobs)


def cmd_sweep(args):
    """Run every point of the grid, then report the reference optimum."""
    manifest = RunManifest.from_args(args)
    config = load_run_config(args)
    grid = config.grid if args.grid is None else parse_value(parse_grid, args.grid, "--grid")
    weights = command_weights(args, config)
    points = build_initial_design(grid)
    surface_path = manifest.output_path("sweep.csv")
    ledger = manifest.open_ledger()
    print(f"Sweeping {len(points)} parameter combinations")

    failed = 0
    for index, (params, (intervals, error)) in enumerate(
        zip(points, run_sweep(config, points, config.workers))
    ):
        if error is None:
            try:
                record = aggregate_experiment(
                    params, intervals, timestamp=index * config.duration_s
                )
            except MetricsError as e:
                error = str(e)
        if error is not None:
            failed += 1
            ledger.append_failure(0, params, error)
            log.warning(f"sweep point {params} failed: {error}")
            continue
        ledger.append_record(record)

    export.write_csv(surface_path, export.SURFACE_COLUMNS, export.surface_rows(ledger.records))
    print(f"{len(ledger.records)} experiments recorded in {ledger.path}, surface in {surface_path}")
    if ledger.records:
        space = derive_search_space(points, 0.0)
        noise_weight = config.optimization.noise_weight
        best = reference_best(ledger.records, weights, space, noise_weight, workers=config.workers)
        print(f"Reference optimum for weights {weights}: {_format_point(best)}")
    if failed:
        print(Fore.RED + f"{failed} of {len(points)} sweep points failed")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_optimize(args):
    """Run the optimization loop against the simulator."""
    manifest = RunManifest.from_args(args)
    config = load_run_config(args)
    cfg = config.optimization.replace(weights=command_weights(args, config))
    if args.replay:
        plant = ReplayPlant.from_ledger(Ledger.load(args.replay))
    else:
        plant = SimulatorPlant(config.simulator)
    ledger = manifest.open_ledger()
    result = run(cfg, plant, ledger, ConsoleReporter())
    print(f"Ledger written to {ledger.path}: {len(result.ledger.records)} experiments")
    return EXIT_OK


def cmd_weights(args):
    """Repeat the optimization for several weightings and tabulate the optimized parameters."""
    manifest = RunManifest.from_args(args)
    config = load_run_config(args)
    path = manifest.output_path("weights.csv")
    results = weight_study(config.optimization, lambda: SimulatorPlant(config.simulator))
    rows = []
    print(f"{'w_a':>5} {'w_r':>5} {'T_R':>6} {'E_T':>6} {'S_E':>6}  status")
    for weights, result in results:
        record = next(r for r in result.ledger.records if r.params == result.best)
        rows.append(
            (weights.w_accept, weights.w_reject, result.status, result.steps)
            + tuple(result.best)
            + (record.tp_n_mean, record.tn_n_mean)
        )
        tr, et, se = result.best
        print(
            f"{weights.w_accept:>5g} {weights.w_reject:>5g} {tr:>6g} {et:>6g} {se:>6g}  "
            f"{result.status}"
        )
    export.write_csv(path, export.WEIGHT_COLUMNS, rows)
    print(f"Weight study written to {path}")
    return EXIT_OK


def report_variance_study(args, ledger, manifest):
    per_width = {}
    for record in ledger.records:
        base = record.intervals[0].duration_s
        widths = [multiple * base for multiple in VARIANCE_MULTIPLES]
        series = variance_series(record.intervals, widths, args.model)
        for width, variance, buckets in series:
            per_width.setdefault(width, []).append((variance, buckets))
    rows = [
        (width, math.fsum(v for v, _ in values) / len(values), sum(b for _, b in values))
        for width, values in sorted(per_width.items())
    ]
    path = manifest.output_path("variance_study.csv")
    export.write_csv(path, export.VARIANCE_COLUMNS, rows)
    print(f"Variance study of {len(ledger.records)} experiments written to {path}")
    usable = [(width, variance) for width, variance, _ in rows if variance > 0]
    if len(usable) >= 3:
        slope = variance_scaling_fit(usable)
        print(f"log-log slope of variance against interval length: {slope:.3f}")
    else:
        print(Fore.YELLOW + "too few interval lengths for a slope")


def report_surface(args, ledger, manifest):
    records = ledger.records
    if not records:
        raise UsageError("a surface needs at least one experiment in the ledger")
    kernel = fit_objective(records, args.model, SURFACE_FIT_NOISE_WEIGHT).kernel
    training = training_set(records, args.model, 0.0)
    space = derive_search_space([record.params for record in records], 0.0)
    grid = space.grid(args.resolution)
    rows = []
    for noise_weight in SURFACE_NOISE_WEIGHTS:
        model = fit(training.with_noise_weight(noise_weight), kernel_init=kernel)
        means, variances = predict_many(model, grid)
        for point, mean, variance in zip(grid, means, variances):
            rows.append((noise_weight,) + tuple(float(v) for v in point) + (mean, variance))
    path = manifest.output_path(f"surface_{args.model}.csv")
    export.write_csv(path, export.POSTERIOR_COLUMNS, rows)
    print(f"Posterior surface of the {args.model} model ({len(grid)} points per lambda) in {path}")


def report_ledger_csv(args, ledger, manifest):
    path = manifest.output_path("ledger.csv")
    count = export.write_csv(path, export.LEDGER_COLUMNS, export.ledger_rows(ledger.records))
    print(f"{count} experiments written to {path}")


def report_boxplot(args, ledger, manifest):
    path = manifest.output_path("boxplot.csv")
    count = export.write_csv(path, export.BOXPLOT_COLUMNS, export.boxplot_rows(ledger.records))
    print(f"{count} interval rates written to {path}")


REPORTS = dict(
    variance_study=report_variance_study,
    surface=report_surface,
    ledger_csv=report_ledger_csv,
    boxplot=report_boxplot,
)


def cmd_report(args):
    """Export plot-ready CSV from an existing ledger."""
    manifest = RunManifest.from_args(args)
    ledger = Ledger.load(args.ledger)
    REPORTS[args.mode](args, ledger, manifest)
    return EXIT_OK


def _format_point(point):
    return "[" + ", ".join(f"{v:.2f}" for v in point) + "]"


def _rate_line(name, mean, variance, low, high):
    return f"  {name} {mean:.4f} (var {variance:.3g}, 95% [{low:.4f}, {high:.4f}])"


common = argparse.ArgumentParser(add_help=False)
common.add_argument("-c", "--config", default=None, help="path to the INI configuration file")
common.add_argument(
    "--seed",
    type=int,
    default=None,
    help="simulator seed; may also be provided in the SORTOPT_SEED env var",
)
common.add_argument("-o", "--out", default=".", help="directory for ledgers and CSV output")
common.add_argument(
    "--force", default=False, action="store_true", help="overwrite existing output files"
)
common.add_argument(
    "--workers", type=int, default=None, help="worker pool size for sweeps and EI evaluation"
)
common.add_argument(
    "-v", "--verbose", default=False, action="store_true", help="output more information"
)
common.add_argument(
    "-q", "--quiet", default=False, action="store_true", help="output less information"
)

parser = ArgumentParser(description="Bayesian optimization of sorting process parameters")
parser.add_argument(
    "-V", "--version", default=False, action="version", version=f"%(prog)s {__version__}"
)
commands = parser.add_subparsers(dest="command", metavar="COMMAND")
commands.required = True

simulate_parser = commands.add_parser("simulate", parents=[common], help="run one experiment")
simulate_parser.add_argument(
    "-p", "--params", required=True, help="the parameter point as T_R,E_T,S_E"
)
simulate_parser.set_defaults(handler=cmd_simulate)

sweep_parser = commands.add_parser("sweep", parents=[common], help="run a full parameter grid")
sweep_parser.add_argument(
    "-g", "--grid", default=None, help='grid such as "12:21;0:8:2;0:8:2" (default: config)'
)
sweep_parser.add_argument(
    "-w", "--weights", default=None, help="weights wa,wr for the reference optimum"
)
sweep_parser.set_defaults(handler=cmd_sweep)

optimize_parser = commands.add_parser("optimize", parents=[common], help="run the optimizer")
optimize_parser.add_argument(
    "-w", "--weights", default=None, help="accept and reject weights as wa,wr summing to 1"
)
optimize_parser.add_argument(
    "-r", "--replay", default=None, help="answer experiments from this ledger instead of simulating"
)
optimize_parser.set_defaults(handler=cmd_optimize)

weights_parser = commands.add_parser(
    "weights", parents=[common], help="compare optimizations under several weightings"
)
weights_parser.set_defaults(handler=cmd_weights)

report_parser = commands.add_parser("report", parents=[common], help="export CSV from a ledger")
report_parser.add_argument("-l", "--ledger", required=True, help="the ledger file to report on")
report_parser.add_argument("-m", "--mode", required=True, choices=REPORT_MODES)
report_parser.add_argument(
    "--model",
    default="accept",
    choices=("accept", "reject"),
    help="the stream to analyse (surface and variance_study)",
)
report_parser.add_argument(
    "--resolution", type=int, default=20, help="surface grid points per dimension"
)
report_parser.set_defaults(handler=cmd_report)


def get_log_level(args):
    if args.quiet:
        log_level = logging.WARNING
    elif args.verbose:
        log_level = logging.DEBUG
    else:
        log_level = logging.INFO
    return log_level


def main(argv=None):
    init(autoreset=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=get_log_level(args), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (UsageError, ConfigError) as e:
        print(Fore.RED + f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (LedgerError, GprError, MetricsError, ReplayMissing, OSError) as e:
        print(Fore.RED + f"failed: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
