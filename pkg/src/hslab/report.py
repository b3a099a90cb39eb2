"""Named-metric reports shared by the diagnostics modules."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass
class Metric:
    value: float
    bound: float | None = None
    margin: float | None = None
    passed: bool | None = None

    def to_dict(self):
        return {
            "value": _num(self.value),
            "bound": _num(self.bound),
            "margin": _num(self.margin),
            "passed": self.passed,
        }


@dataclass
class DiagnosticsReport:
    name: str
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add(self, key, value, bound=None, *, upper=True, passed=None):
        """Record ``value`` against ``bound`` (an upper bound unless ``upper=False``)."""
        margin = None
        if bound is not None and passed is None:
            margin = bound - value if upper else value - bound
            passed = bool(margin >= 0)
        elif bound is not None:
            margin = bound - value if upper else value - bound
        self.metrics[key] = Metric(float(value), bound, margin, passed)
        return self.metrics[key]

    def __getitem__(self, key):
        return self.metrics[key]

    @property
    def passed(self) -> bool:
        return all(m.passed is not False for m in self.metrics.values())

    @property
    def failures(self):
        return [k for k, m in self.metrics.items() if m.passed is False]

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "passed": self.passed,
            "metrics": {k: self.metrics[k].to_dict() for k in sorted(self.metrics)},
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v
