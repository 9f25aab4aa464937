"""scikit-learn style wrappers around the threshold and control-chart checks."""
from __future__ import annotations

from typing import Dict, Iterable, List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .events import ConnectionEvent
from .features import DEFAULT_PORTS
from .spc import (Alert, ConfigError, ControlLimits, RuleSet, Side, Status,
                  classify_fast_attack, compute_limits, evaluate_series,
                  western_electric)
from .timeseries import (DEFAULT_THRESHOLD, SeriesKey, ThresholdConfig,
                         bin_per_second, group_series, select_threshold)


def _check_series(X) -> np.ndarray:
    return check_array(X, ensure_2d=False, dtype=np.float64).ravel()


class StaticThreshold(BaseEstimator):
    """Fixed connections-per-second cutoff.

    ``fit`` takes the per-second means of vetted normal sources and picks
    the threshold with :func:`select_threshold`; passing ``threshold``
    skips selection.
    """

    def __init__(self, threshold: Optional[int] = None, experiment_max: int = DEFAULT_THRESHOLD):
        self.threshold = threshold
        self.experiment_max = experiment_max

    def fit(self, X=None, y=None):
        if self.threshold is not None:
            self.threshold_ = ThresholdConfig(int(self.threshold), ("override",))
        else:
            if X is None:
                raise ValueError("X (normal means) is required when no threshold is set")
            self.threshold_ = select_threshold(_check_series(X).tolist(), self.experiment_max)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "threshold_")
        return _check_series(X) > self.threshold_.value


class ShewhartChart(BaseEstimator):
    """Control chart over a 1-D count series.

    ``predict`` returns the Western Electric status string for each point.
    """

    def __init__(self, k: float = 3.0, side: str = Side.UPPER_ONLY.value):
        self.k = k
        self.side = side

    def fit(self, X, y=None):
        self.limits_ = compute_limits(_check_series(X), self.k)
        return self

    def verdicts(self, X):
        check_is_fitted(self, "limits_")
        return western_electric(_check_series(X), self.limits_, self.side)

    def predict(self, X) -> np.ndarray:
        return np.array([v.status.value for v in self.verdicts(X)])

    def decision_function(self, X) -> np.ndarray:
        """Signed distance from the centre line in sigmas (nan when sigma is 0)."""
        check_is_fitted(self, "limits_")
        x = _check_series(X)
        if self.limits_.sigma == 0:
            return np.full(x.shape, np.nan)
        return (x - self.limits_.cl) / self.limits_.sigma

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)


class FastAttackDetector(BaseEstimator):
    """End-to-end detector over connection events.

    ``fit`` bins the baseline events and stores control limits per
    (victim, port) series.  ``predict`` bins new events and returns alerts;
    series not seen during ``fit`` are charted against their own limits.
    ``fit_predict`` on one event set is the retrospective mode.
    """

    def __init__(self, threshold: int = DEFAULT_THRESHOLD, k: float = 3.0,
                 rule_set: str = RuleSet.BOTH.value, side: str = Side.UPPER_ONLY.value,
                 zero_fill: bool = True, monitored_ports=DEFAULT_PORTS):
        self.threshold = threshold
        self.k = k
        self.rule_set = rule_set
        self.side = side
        self.zero_fill = zero_fill
        self.monitored_ports = monitored_ports

    def _validate(self):
        if not (isinstance(self.k, (int, float)) and self.k > 0):
            raise ConfigError(f"k must be positive, got {self.k!r}")
        RuleSet(self.rule_set)
        Side(self.side)
        if not self.monitored_ports:
            raise ConfigError("monitored port set is empty")

    def _series(self, events: Iterable[ConnectionEvent]):
        ports = frozenset(self.monitored_ports)
        kept = [e for e in events if e.dst_port in ports]
        return group_series(bin_per_second(kept, zero_fill=self.zero_fill))

    def fit(self, X: Iterable[ConnectionEvent], y=None):
        self._validate()
        self.threshold_ = ThresholdConfig(int(self.threshold), ("configured",))
        self.limits_: Dict[SeriesKey, ControlLimits] = {
            key: compute_limits([b.count for b in bins], self.k)
            for key, bins in self._series(X).items()
        }
        return self

    def predict(self, X: Iterable[ConnectionEvent]) -> List[Alert]:
        check_is_fitted(self, "limits_")
        alerts: List[Alert] = []
        for key, bins in self._series(X).items():
            alerts.extend(classify_fast_attack(
                bins, self.threshold_, self.limits_.get(key), self.rule_set,
                self.side, self.k))
        return alerts

    def fit_predict(self, X, y=None) -> List[Alert]:
        X = list(X)
        return self.fit(X).predict(X)

    def chart(self, X: Iterable[ConnectionEvent]):
        """Per-series rows of (bin, limits, triggers) for plotting."""
        check_is_fitted(self, "limits_")
        out = {}
        for key, bins in self._series(X).items():
            limits = self.limits_.get(key) or compute_limits([b.count for b in bins], self.k)
            triggers = evaluate_series(bins, self.threshold_, limits, self.rule_set,
                                       self.side, self.k)
            out[key] = (bins, limits, [t[0] if t else Status.IN_CONTROL for t in triggers])
        return out
