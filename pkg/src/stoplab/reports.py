"""Pass/fail reports shared by the simulator and the hypothesis checkers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class CheckReport:
    """Verdict for one machine check.

    ``worst_violation`` is signed in the units of the checked quantity; a
    FAIL always carries a witness point.  INCONCLUSIVE marks checks whose
    prerequisite region or surface was empty.
    """

    check_name: str
    verdict: str
    worst_violation: float
    witness: Optional[tuple[float, float]]
    tolerance: float
    notes: str = ""

    def to_dict(self) -> dict:
        witness = None
        if self.witness is not None:
            witness = {"t": self.witness[0], "x": self.witness[1]}
        return {
            "check": self.check_name,
            "verdict": self.verdict,
            "worst": self.worst_violation,
            "witness": witness,
            "tol": self.tolerance,
            "notes": self.notes,
        }

    @property
    def ok(self) -> bool:
        return self.verdict in (PASS, INCONCLUSIVE)
