"""LemmaReport: one verified inequality with its inputs and margin."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def jsonable(x):
    """Recursively convert to JSON-safe values (non-finite floats become strings)."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        try:
            x = x.item()
        except (AttributeError, ValueError):
            pass
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return str(x)


def margin(lhs: float, rhs: float) -> float:
    """rhs/lhs; infinite when the left side vanishes."""
    if lhs <= 0:
        return math.inf if rhs >= 0 else -math.inf
    return rhs / lhs


@dataclass
class LemmaReport:
    lemma_id: str
    lhs: float
    rhs: float
    constant_name: str = ""
    constant_value: float = float("nan")
    slack: float = 1.0
    inputs: dict = field(default_factory=dict)
    passed: bool | None = None
    skipped: bool = False
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    subchecks: list = field(default_factory=list)

    def __post_init__(self):
        if self.passed is None and not self.skipped:
            self.passed = self.lhs <= self.rhs * self.slack

    @property
    def margin(self) -> float:
        return margin(self.lhs, self.rhs)

    @property
    def ok(self) -> bool:
        """True when skipped or passed, including every sub-check."""
        if self.skipped:
            return True
        return bool(self.passed) and all(s.ok for s in self.subchecks)

    def to_json(self) -> dict:
        out = {
            "lemma_id": self.lemma_id,
            "inputs": self.inputs,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant_name": self.constant_name,
            "constant_value": self.constant_value,
            "slack": self.slack,
            "margin": self.margin,
            "pass": self.ok,
            "skipped": self.skipped,
        }
        if self.notes:
            out["notes"] = list(self.notes)
        if self.details:
            out["details"] = self.details
        if self.subchecks:
            out["subchecks"] = [s.to_json() for s in self.subchecks]
        return jsonable(out)


def skipped(lemma_id: str, reason: str, **inputs) -> LemmaReport:
    return LemmaReport(lemma_id, 0.0, 0.0, inputs=inputs, skipped=True, notes=[reason])


def slack_factor(h: float, coeff: float = 10.0) -> float:
    """Multiplicative slack (1 + coeff*h) applied to continuum inequalities."""
    return 1.0 + coeff * h
