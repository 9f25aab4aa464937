import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fastguard.estimators import FastAttackDetector, ShewhartChart, StaticThreshold
from fastguard.spc import ConfigError, Status
from fastguard.synth import inject_attack, preset


def test_static_threshold_selection():
    est = StaticThreshold(experiment_max=3).fit([1.16, 2.91, 1.07, 2.83, 2.83, 1.14, 1.77, 2.18, 1.81])
    assert est.threshold_.value == 3
    np.testing.assert_array_equal(est.predict([1, 3, 4, 70]), [False, False, True, True])


def test_static_threshold_override_and_params():
    est = StaticThreshold(threshold=5)
    assert est.get_params() == {"threshold": 5, "experiment_max": 3}
    assert est.fit().predict([5, 6]).tolist() == [False, True]
    with pytest.raises(NotFittedError):
        StaticThreshold().predict([1])


def test_shewhart_chart():
    chart = ShewhartChart(k=3).fit([1, 2, 3])
    assert (chart.limits_.ucl, chart.limits_.lcl) == (5, 0)
    assert chart.predict([2, 6]).tolist() == ["in_control", "rule1"]
    np.testing.assert_allclose(chart.decision_function([2, 6]), [0, 4])
    assert clone(chart).get_params() == {"k": 3, "side": "upper_only"}


def test_shewhart_rejects_bad_input():
    with pytest.raises(ValueError):
        ShewhartChart().fit([1, np.nan])
    with pytest.raises(ConfigError):
        ShewhartChart(k=0).fit([1, 2])


def test_detector_retrospective():
    events = preset("attack", duration=60).generate()
    alerts = FastAttackDetector().fit_predict(events)
    assert [(a.victim_ip, a.port, a.count, a.trigger) for a in alerts] == [
        ("10.0.0.25", 25, 70, Status.OVER_THRESHOLD)] * 5


def test_detector_prospective_baseline():
    # limits learned on normal traffic, then applied to an attacked stream
    normal = preset("normal", duration=60).generate()
    attacked = inject_attack(normal, 2, "10.0.0.14", 110, 1_000_000_030, 3)
    det = FastAttackDetector(rule_set="spc_only").fit(normal)
    alerts = det.predict(attacked)
    assert [(a.epoch_second, a.count, a.trigger) for a in alerts] == [
        (1_000_000_030 + i, 3, Status.RULE1) for i in range(3)]
    # the same bins judged only by the static threshold are normal
    assert FastAttackDetector(rule_set="threshold_only").fit(normal).predict(attacked) == []


def test_detector_bad_config():
    with pytest.raises(ConfigError):
        FastAttackDetector(k=-1).fit([])
    with pytest.raises(ValueError):
        FastAttackDetector(rule_set="bogus").fit([])
