from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .signal import TimeSeries


class TestKind(str, Enum):
    __test__ = False  # not a pytest class

    NORMAL = "normal"
    HOLD = "hold"
    DEEP = "deep"

    @property
    def segmented(self) -> bool:
        return self is not TestKind.NORMAL


@dataclass(frozen=True)
class Phase:
    label: str
    start: int  # sample index, inclusive
    stop: int  # exclusive


@dataclass
class BreathSession:
    session_id: str
    participant_id: str
    test_kind: TestKind
    raw: TimeSeries
    phases: list[Phase] = field(default_factory=list)
    filtered: TimeSeries | None = None

    @property
    def sample_rate(self) -> float:
        return self.raw.sample_rate

    def signal(self) -> TimeSeries:
        return self.filtered if self.filtered is not None else self.raw

    def phase_boundary(self) -> int | None:
        """Start index of the phase following the protocol's hold/deep phase."""
        for i, ph in enumerate(self.phases):
            if ph.label in ("hold", "deep") and i + 1 < len(self.phases):
                return self.phases[i + 1].start
        return None
