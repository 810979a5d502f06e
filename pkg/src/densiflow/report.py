"""Uniform container for inequality/identity checks.

Every check operation in the package reports the same shape: the two sides
of the inequality it tested, a margin, a boolean, and the parameters that
produced it, so CLI subcommands can serialize any check as one JSON object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckResult:
    lhs: float
    rhs: float
    passed: bool
    params: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        """rhs/lhs ratio; inf when lhs is zero (vacuous pass)."""
        if self.lhs == 0.0:
            return math.inf
        return self.rhs / self.lhs

    def as_dict(self) -> dict:
        m = self.margin
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": None if math.isinf(m) else m,
            "pass": self.passed,
            "params": dict(self.params),
        }
