# igsf/filters/adp.py
"""
Artificial diffusion parameter (ADP) schedules for the iterated updates.

Kinds:
- "exp-decay":          α^1 given, α^{l+1} = α^l / exp(l)   (so α^l = α^1 · exp(−l(l−1)/2))
- "constant-then-zero": α^l = α^1 for l < Γ, α^Γ = 0
- "none":               α^l = 0 (plain iterated filter)
"""

import math
from dataclasses import dataclass
from typing import List

from igsf.errors import ParameterError

EXP_DECAY = "exp-decay"
CONSTANT_THEN_ZERO = "constant-then-zero"
NO_ADP = "none"
SCHEDULE_KINDS = (EXP_DECAY, CONSTANT_THEN_ZERO, NO_ADP)


@dataclass(frozen=True)
class AdpSchedule:
    alpha1: float
    kind: str = EXP_DECAY
    iterations: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ParameterError(f"unknown ADP schedule kind '{self.kind}'", {"allowed": list(SCHEDULE_KINDS)})
        if not math.isfinite(self.alpha1) or self.alpha1 < 0:
            raise ParameterError("alpha1 must be finite and >= 0", {"alpha1": self.alpha1})
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ParameterError("iteration count must be an integer >= 0", {"iterations": self.iterations})

    def values(self) -> List[float]:
        """α^1 … α^Γ."""
        return [adp_value(self, l) for l in range(1, self.iterations + 1)]


def adp_value(schedule: AdpSchedule, l: int) -> float:
    if l < 1 or l > schedule.iterations:
        raise ParameterError(
            f"iteration index {l} outside 1..{schedule.iterations}",
            {"l": l, "iterations": schedule.iterations},
        )
    if schedule.kind == EXP_DECAY:
        return schedule.alpha1 * math.exp(-0.5 * l * (l - 1))
    if schedule.kind == CONSTANT_THEN_ZERO:
        return schedule.alpha1 if l < schedule.iterations else 0.0
    return 0.0
