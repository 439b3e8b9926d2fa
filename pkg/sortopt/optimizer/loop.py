"""The sequential optimization loop.

Each step fits one surrogate per objective to the ledger, maximizes the
weighted expected improvement over the search space, rounds the proposal to
settings the plant can actuate and runs that experiment.
"""
import logging
from collections import namedtuple

import numpy as np

from ..plant.metrics import aggregate_experiment
from ..plant.params import ParameterPoint
from ..plant.simulator import ConfigError, interval_count
from ..surrogate.acquisition import (
    GRID_RESOLUTION,
    AcquisitionState,
    CombinedWeights,
    maximize,
    maximize_combined_ei,
    round_to_actuation,
)
from ..surrogate.gpr import TrainingSet, fit, predict_many
from .design import DEFAULT_DESIGN_GRID, build_initial_design, derive_search_space
from .ledger import Ledger, Proposal
from .reporter import BUDGET_EXHAUSTED, CONVERGED, EI_FLOOR, LoggedReporter

log = logging.getLogger(__name__)

# (mean, variance) record attributes modelled for each stream
OBJECTIVES = dict(accept=("tp_n_mean", "tp_n_var"), reject=("tn_n_mean", "tn_n_var"))

WEIGHT_STUDY_PAIRS = ((1.0, 0.0), (0.0, 1.0), (0.7, 0.3), (0.3, 0.7), (0.5, 0.5))


class OptimizationConfig:
    DEFAULTS = dict(
        initial_design=None,
        weights=CombinedWeights(0.5, 0.5),
        noise_weight=0.1,
        search_margin=1.0,
        max_steps=8,
        convergence_tol=1.0,
        convergence_patience=2,
        ei_floor=1e-4,
        duration_s=300.0,
        interval_s=10.0,
        resolution=GRID_RESOLUTION,
        workers=1,
    )

    def __init__(self, **options):
        unknown = set(options) - set(self.DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown optimization option {sorted(unknown)[0]!r}")
        for name, default in self.DEFAULTS.items():
            setattr(self, name, options.get(name, default))
        if self.initial_design is None:
            self.initial_design = build_initial_design(DEFAULT_DESIGN_GRID)
        self.initial_design = [ParameterPoint.from_sequence(p) for p in self.initial_design]
        if not isinstance(self.weights, CombinedWeights):
            self.weights = CombinedWeights(*self.weights)
        self.validate()
        self.search_space = derive_search_space(self.initial_design, self.search_margin)

    def __repr__(self):
        return (
            f"<OptimizationConfig design={len(self.initial_design)} weights={self.weights} "
            f"lambda={self.noise_weight:g}>"
        )

    def replace(self, **changes):
        options = {name: getattr(self, name) for name in self.DEFAULTS}
        options.update(changes)
        return type(self)(**options)

    def validate(self):
        if not self.initial_design:
            raise ConfigError("initial_design must hold at least one point")
        if all(len(set(values)) < 2 for values in zip(*self.initial_design)):
            raise ConfigError("initial_design must vary in at least one parameter")
        if not self.noise_weight >= 0:
            raise ConfigError(f"noise_weight must be non-negative, got {self.noise_weight!r}")
        if not self.search_margin >= 0:
            raise ConfigError(f"search_margin must be non-negative, got {self.search_margin!r}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 0:
            raise ConfigError(f"max_steps must be a non-negative integer, got {self.max_steps!r}")
        patience = self.convergence_patience
        if int(patience) != patience or patience < 1:
            raise ConfigError(f"convergence_patience must be a positive integer, got {patience!r}")
        if not self.convergence_tol > 0:
            raise ConfigError(f"convergence_tol must be positive, got {self.convergence_tol!r}")
        if not self.ei_floor >= 0:
            raise ConfigError(f"ei_floor must be non-negative, got {self.ei_floor!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        interval_count(self.duration_s, self.interval_s)


RunResult = namedtuple("RunResult", "ledger best status steps")


def chebyshev_distance(a, b):
    return max(abs(x - y) for x, y in zip(a, b))


def training_set(records, objective, noise_weight):
    """Observed means and variances of one stream ("accept" or "reject")."""
    mean_field, variance_field = OBJECTIVES[objective]
    return TrainingSet(
        [record.params for record in records],
        [getattr(record, mean_field) for record in records],
        [getattr(record, variance_field) for record in records],
        noise_weight,
    )


def fit_objective(records, objective, noise_weight, optimize_hyperparams=True):
    training = training_set(records, objective, noise_weight)
    return fit(training, optimize_hyperparams=optimize_hyperparams)


def fit_models(records, weights, noise_weight, optimize_hyperparams=True):
    """(accept model, reject model); a model whose weight is zero is not fitted."""
    model_accept = model_reject = None
    if weights.w_accept:
        model_accept = fit_objective(records, "accept", noise_weight, optimize_hyperparams)
    if weights.w_reject:
        model_reject = fit_objective(records, "reject", noise_weight, optimize_hyperparams)
    return model_accept, model_reject


def execute(ledger, cfg, plant, params, step, reporter):
    """Run one experiment and append its record; failures are logged in the ledger."""
    ordinal = len(ledger.records)
    try:
        intervals = plant.run(params, cfg.duration_s, cfg.interval_s, ordinal)
        record = aggregate_experiment(params, intervals, timestamp=ordinal * cfg.duration_s)
    except Exception as e:
        ledger.append_failure(step, params, e)
        reporter.fail(f"experiment at {params} failed: {e}")
        raise
    ledger.append_record(record)
    reporter.record(record)
    return record


def run_initial_design(ledger, cfg, plant, reporter):
    for params in cfg.initial_design:
        execute(ledger, cfg, plant, params, 0, reporter)


def step(ledger, cfg, plant, step_index=None, reporter=None):
    """One optimization step: model, propose, actuate, measure.

    Returns the ledger with one more proposal and one more record.
    """
    reporter = reporter or LoggedReporter()
    records = ledger.records
    if not records:
        raise ValueError("cannot model an empty ledger; run the initial design first")
    step_index = ledger.next_step if step_index is None else step_index
    models = fit_models(records, cfg.weights, cfg.noise_weight)
    state = AcquisitionState.from_records(records)
    raw, value = maximize_combined_ei(
        models, state, cfg.weights, cfg.search_space, cfg.resolution, workers=cfg.workers
    )
    proposal = Proposal(step_index, raw, round_to_actuation(raw, cfg.search_space), value)
    ledger.append_proposal(proposal)
    reporter.proposal(proposal)
    execute(ledger, cfg, plant, proposal.actuated, step_index, reporter)
    return ledger


def best_record(records, weights):
    """The record scoring highest on the weighted objectives; ties go to the smallest params."""
    return min(records, key=lambda r: (-r.score(weights), tuple(r.params)))


def run(cfg, plant, ledger=None, reporter=None):
    """Run the initial design, then step until the proposals settle or the budget is spent."""
    ledger = Ledger() if ledger is None else ledger
    reporter = reporter or LoggedReporter()
    reporter.start(cfg)
    run_initial_design(ledger, cfg, plant, reporter)

    status = BUDGET_EXHAUSTED
    stable = 0
    previous = None
    steps = 0
    for steps in range(1, cfg.max_steps + 1):
        step(ledger, cfg, plant, reporter=reporter)
        proposal = ledger.proposals[-1]
        if proposal.combined_ei < cfg.ei_floor:
            log.info(f"combined EI {proposal.combined_ei:.3g} fell below {cfg.ei_floor:g}")
            status = EI_FLOOR
            break
        if previous is not None and (
            chebyshev_distance(proposal.actuated, previous) < cfg.convergence_tol
        ):
            stable += 1
        else:
            stable = 0
        previous = proposal.actuated
        if stable >= cfg.convergence_patience:
            log.info(f"proposals stable for {stable} consecutive steps")
            status = CONVERGED
            break

    if status == BUDGET_EXHAUSTED and cfg.max_steps:
        reporter.warn(f"no convergence after {steps} steps, the step budget is spent")
    best = best_record(ledger.records, cfg.weights).params
    ledger.set_status(status, best)
    result = RunResult(ledger, best, status, steps)
    reporter.end(result)
    return result


def reference_best(
    records, weights, space=None, noise_weight=0.1, resolution=GRID_RESOLUTION, workers=1
):
    """Continuous arg max of the weighted posterior means fitted to all records."""
    records = list(records)
    if space is None:
        space = derive_search_space([record.params for record in records], 0.0)
    model_accept, model_reject = fit_models(records, weights, noise_weight)

    def objective(points):
        total = np.zeros(len(points))
        if model_accept is not None:
            total += weights.w_accept * predict_many(model_accept, points)[0]
        if model_reject is not None:
            total += weights.w_reject * predict_many(model_reject, points)[0]
        return total

    best, value = maximize(objective, space, resolution, workers=workers)
    log.info(f"reference optimum {best} with weighted mean {value:.4f} over {len(records)} records")
    return best


def weight_study(cfg, plant_factory, weight_pairs=WEIGHT_STUDY_PAIRS, reporter=None):
    """Repeat the optimization from the same start under several weightings.

    `plant_factory` returns a fresh plant for each run.
    """
    results = []
    for pair in weight_pairs:
        weights = pair if isinstance(pair, CombinedWeights) else CombinedWeights(*pair)
        result = run(cfg.replace(weights=weights), plant_factory(), reporter=reporter)
        results.append((weights, result))
    return results
