from unittest.mock import Mock

import pytest

from sortopt.optimizer import loop
from sortopt.optimizer.design import build_initial_design, derive_search_space
from sortopt.optimizer.ledger import Ledger, Proposal
from sortopt.optimizer.loop import (
    OptimizationConfig,
    best_record,
    chebyshev_distance,
    execute,
    reference_best,
    run,
    run_initial_design,
    step,
    training_set,
    weight_study,
)
from sortopt.optimizer.reporter import BUDGET_EXHAUSTED, CONVERGED, EI_FLOOR
from sortopt.plant.params import ParameterPoint
from sortopt.plant.simulator import ConfigError
from sortopt.surrogate.acquisition import CombinedWeights
from sortopt.test.fake_plant import SmoothPlant


def quick_config(**options):
    options.setdefault("duration_s", 60.0)
    options.setdefault("resolution", 8)
    return OptimizationConfig(**options)


@pytest.fixture
def seeded():
    cfg = quick_config()
    ledger = Ledger()
    run_initial_design(ledger, cfg, SmoothPlant(), Mock())
    return cfg, ledger


def test_default_config():
    cfg = OptimizationConfig()
    assert len(cfg.initial_design) == 12
    assert cfg.search_space.lower == (11, 0, 0)
    assert cfg.search_space.upper == (22, 9, 9)
    assert cfg.weights == (0.5, 0.5)
    assert cfg.max_steps == 8


def test_config_coerces_weights_and_points():
    cfg = OptimizationConfig(weights=(0.7, 0.3), initial_design=[(12, 0, 0), (18, 0, 8)])
    assert isinstance(cfg.weights, CombinedWeights)
    assert all(isinstance(p, ParameterPoint) for p in cfg.initial_design)


@pytest.mark.parametrize(
    "options, field",
    [
        (dict(bogus=1), "bogus"),
        (dict(max_steps=-1), "max_steps"),
        (dict(max_steps=1.5), "max_steps"),
        (dict(noise_weight=-0.1), "noise_weight"),
        (dict(convergence_patience=0), "convergence_patience"),
        (dict(convergence_tol=0), "convergence_tol"),
        (dict(workers=0), "workers"),
        (dict(initial_design=[]), "initial_design"),
        (dict(initial_design=[(15, 0, 0), (15, 0, 0)]), "initial_design"),
        (dict(interval_s=7.0), "interval"),
    ],
)
def test_config_validation(options, field):
    with pytest.raises(ConfigError, match=field):
        OptimizationConfig(**options)


def test_config_replace():
    cfg = quick_config()
    changed = cfg.replace(weights=CombinedWeights(1, 0))
    assert changed.weights == (1, 0)
    assert changed.duration_s == 60.0
    assert cfg.weights == (0.5, 0.5)


def test_chebyshev_distance():
    assert chebyshev_distance((15, 0, 8), (16, 3, 8)) == 3


def test_training_set_per_objective(seeded):
    _, ledger = seeded
    accept = training_set(ledger.records, "accept", 0.1)
    reject = training_set(ledger.records, "reject", 0.1)
    assert list(accept.targets) == [r.tp_n_mean for r in ledger.records]
    assert list(reject.noise_variances) == [r.tn_n_var for r in ledger.records]
    assert accept.noise_weight == 0.1


def test_initial_design_records_in_order(seeded):
    cfg, ledger = seeded
    assert [r.params for r in ledger.records] == cfg.initial_design
    assert [r.timestamp for r in ledger.records] == [60.0 * n for n in range(12)]
    assert ledger.proposals == ()


def test_step_appends_one_proposal_and_one_record(seeded):
    cfg, ledger = seeded
    reporter = Mock()
    step(ledger, cfg, SmoothPlant(), reporter=reporter)
    assert len(ledger.records) == 13
    proposal = ledger.proposals[0]
    assert proposal.step == 1
    assert proposal.actuated.is_integral
    assert cfg.search_space.contains(proposal.raw)
    assert cfg.search_space.contains(proposal.actuated)
    assert ledger.records[-1].params == proposal.actuated
    assert proposal.combined_ei >= 0
    reporter.proposal.assert_called_once_with(proposal)
    reporter.record.assert_called_once_with(ledger.records[-1])


def test_step_on_empty_ledger():
    with pytest.raises(ValueError, match="empty ledger"):
        step(Ledger(), quick_config(), SmoothPlant())


def test_step_never_fits_unweighted_model(seeded, monkeypatch):
    cfg, ledger = seeded
    fitted = []
    real = loop.fit_objective

    def spy(records, objective, *args, **kwargs):
        fitted.append(objective)
        return real(records, objective, *args, **kwargs)

    monkeypatch.setattr(loop, "fit_objective", spy)
    step(ledger, cfg.replace(weights=CombinedWeights(1, 0)), SmoothPlant(), reporter=Mock())
    assert fitted == ["accept"]


def test_step_is_deterministic(seeded):
    cfg, ledger = seeded
    other = Ledger()
    for record in ledger.records:
        other.append_record(record)
    step(ledger, cfg, SmoothPlant(), reporter=Mock())
    step(other, cfg, SmoothPlant(), reporter=Mock())
    assert ledger.proposals == other.proposals
    assert ledger.records == other.records


def test_execute_records_failures():
    cfg = quick_config()
    ledger = Ledger()
    reporter = Mock()
    plant = SmoothPlant(fail_at=(15, 0, 0))
    with pytest.raises(RuntimeError):
        execute(ledger, cfg, plant, ParameterPoint(15, 0, 0), 3, reporter)
    assert ledger.records == ()
    assert ledger.failures[0].step == 3
    assert ledger.failures[0].error == "nozzle bar offline"
    reporter.fail.assert_called_once()


def test_plant_sees_experiment_ordinals(seeded):
    cfg, ledger = seeded
    plant = SmoothPlant()
    step(ledger, cfg, plant, reporter=Mock())
    assert plant.calls[0][1] == 12


def test_run_without_steps():
    result = run(quick_config(max_steps=0), SmoothPlant(), reporter=Mock())
    assert result.status == BUDGET_EXHAUSTED
    assert result.steps == 0
    assert len(result.ledger.records) == 12
    assert result.ledger.status == BUDGET_EXHAUSTED


def test_run_is_deterministic():
    cfg = quick_config(max_steps=2)
    first = run(cfg, SmoothPlant(), reporter=Mock())
    second = run(cfg, SmoothPlant(), reporter=Mock())
    assert first.ledger.proposals == second.ledger.proposals
    assert first.best == second.best
    assert len(first.ledger.records) == 12 + first.steps


def scripted_steps(monkeypatch, proposals):
    """Replace the modelling step with a fixed sequence of (point, combined EI)."""
    script = iter(proposals)

    def fake_step(ledger, cfg, plant, step_index=None, reporter=None):
        point, ei = next(script)
        point = ParameterPoint(*point)
        ledger.append_proposal(Proposal(ledger.next_step, point, point, ei))
        execute(ledger, cfg, plant, point, ledger.next_step - 1, reporter)
        return ledger

    monkeypatch.setattr(loop, "step", fake_step)


def test_run_converges_after_three_equal_proposals(monkeypatch):
    scripted_steps(monkeypatch, [((15, 0, 8), 0.01)] * 3 + [((12, 0, 0), 0.01)] * 5)
    reporter = Mock()
    result = run(quick_config(), SmoothPlant(), reporter=reporter)
    assert result.status == CONVERGED
    assert result.steps == 3
    assert result.ledger.status == CONVERGED
    reporter.warn.assert_not_called()


def test_run_convergence_tolerates_small_moves(monkeypatch):
    moves = [(15, 0, 8), (15, 1, 8), (16, 1, 8), (20, 1, 8)]
    scripted_steps(monkeypatch, [(p, 0.01) for p in moves] + [((20, 1, 8), 0.01)] * 5)
    result = run(quick_config(convergence_tol=1.5), SmoothPlant(), reporter=Mock())
    assert result.status == CONVERGED
    assert result.steps == 3


def test_run_stops_at_ei_floor(monkeypatch):
    scripted_steps(monkeypatch, [((15, 0, 8), 0.01), ((16, 0, 8), 1e-6)] + [((12, 0, 0), 0.1)] * 6)
    result = run(quick_config(), SmoothPlant(), reporter=Mock())
    assert result.status == EI_FLOOR
    assert result.steps == 2


def test_run_exhausts_budget(monkeypatch):
    scripted_steps(monkeypatch, [((12 + 3 * (n % 2), 0, 0), 0.01) for n in range(8)])
    reporter = Mock()
    result = run(quick_config(max_steps=4), SmoothPlant(), reporter=reporter)
    assert result.status == BUDGET_EXHAUSTED
    assert result.steps == 4
    assert len(result.ledger.records) == 16
    reporter.start.assert_called_once()
    reporter.end.assert_called_once_with(result)
    reporter.warn.assert_called_once_with("no convergence after 4 steps, the step budget is spent")


def test_best_record_prefers_score_then_smallest_params(seeded):
    _, ledger = seeded
    records = ledger.records
    best = best_record(records, CombinedWeights(0, 1))
    assert best.tn_n_mean == max(r.tn_n_mean for r in records)
    tied = [records[3], records[0]]
    for record in tied:
        record.tp_n_mean = record.tn_n_mean = 0.5
    assert best_record(tied, CombinedWeights()) is records[0]


def test_reference_best_inside_the_design_box(seeded):
    cfg, ledger = seeded
    best = reference_best(ledger.records, CombinedWeights(0, 1), resolution=8)
    assert derive_search_space(cfg.initial_design, 0).contains(best)
    assert best.extended_space == pytest.approx(8, abs=1e-3)


def test_weight_study_runs_each_weighting():
    plants = []

    def factory():
        plants.append(SmoothPlant())
        return plants[-1]

    cfg = quick_config(max_steps=1, initial_design=build_initial_design([(12, 18), (0,), (0, 8)]))
    results = weight_study(cfg, factory, [(1, 0), (0, 1)], reporter=Mock())
    assert [weights for weights, _ in results] == [(1, 0), (0, 1)]
    assert len(plants) == 2
    for _, result in results:
        assert len(result.ledger.records) == 4 + result.steps
