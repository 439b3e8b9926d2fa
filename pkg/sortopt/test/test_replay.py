from unittest.mock import Mock

import pytest

from sortopt.optimizer.ledger import Ledger
from sortopt.plant import replay
from sortopt.plant.metrics import ConfusionMatrix, IntervalResult, aggregate_experiment
from sortopt.plant.params import ParameterPoint
from sortopt.plant.replay import ReplayMissing, ReplayPlant

POINT = ParameterPoint(15, 0, 8)


def record(tp, params=POINT):
    intervals = [IntervalResult(ConfusionMatrix(tp, 10 - tp + i, 1, 4), 10.0) for i in range(3)]
    return aggregate_experiment(params, intervals)


def test_replay_returns_recorded_intervals():
    stored = record(8)
    plant = ReplayPlant([stored])
    assert plant.run(POINT, 30.0, 10.0, 0) == stored.intervals


def test_replay_cycles_through_repeats():
    first, second = record(8), record(6)
    plant = ReplayPlant([first, second, record(9, ParameterPoint(12, 0, 0))])
    served = [plant.run(POINT, 30.0, 10.0, n) for n in range(3)]
    assert served == [first.intervals, second.intervals, first.intervals]


def test_replay_returns_a_copy():
    stored = record(8)
    plant = ReplayPlant([stored])
    plant.run(POINT, 30.0, 10.0, 0).clear()
    assert len(stored.intervals) == 3


def test_replay_missing_point():
    plant = ReplayPlant([record(8)])
    with pytest.raises(ReplayMissing, match=r"\[16, 0, 8\]"):
        plant.run(ParameterPoint(16, 0, 8), 30.0, 10.0, 0)


def test_replay_warns_on_duration_mismatch(monkeypatch):
    monkeypatch.setattr(replay, "log", Mock())
    ReplayPlant([record(8)]).run(POINT, 300.0, 10.0, 0)
    replay.log.warning.assert_called_once()


def test_replay_from_ledger():
    ledger = Ledger()
    ledger.append_record(record(7))
    plant = ReplayPlant.from_ledger(ledger)
    assert plant.run(POINT, 30.0, 10.0, 0) == ledger.records[0].intervals
