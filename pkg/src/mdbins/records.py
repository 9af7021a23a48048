from __future__ import annotations

from dataclasses import dataclass, field

from .core import LoadMatrix

CSV_COLUMNS = (
    "point",
    "trial",
    "seed",
    "t",
    "max_gap",
    "sum_gap",
    "ball_count_gap",
    "phi",
    "psi",
    "gamma",
    "rounds_used",
)


@dataclass(frozen=True)
class CheckpointRow:
    t: int
    max_gap: float
    sum_gap: float
    ball_count_gap: float
    phi: float | None = None
    psi: float | None = None
    gamma: float | None = None
    rounds_used: int | None = None


@dataclass
class TrajectoryRecord:
    trial: int
    seed: int
    rows: list[CheckpointRow]
    rounds_used: int | None = None
    point: int = 0
    final_state: LoadMatrix | None = field(default=None, repr=False, compare=False)

    @property
    def final(self) -> CheckpointRow:
        return self.rows[-1]

    def at(self, t: int) -> CheckpointRow:
        for row in self.rows:
            if row.t == t:
                return row
        raise KeyError(f"no checkpoint at t={t}")
