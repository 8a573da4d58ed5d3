"""Per-iteration solver records."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SolverTrace:
    solver: str
    lam: float
    rows: list = field(default_factory=list)
    status: str = "running"
    flags: list = field(default_factory=list)
    best_index: int | None = None
    # solver-specific scalars (step size, smoothness, best policy, ...)
    step: float | None = None
    smoothness: float | None = None
    min_slack: float | None = None
    best_policy: object = None

    def log(self, iteration: int, **values):
        values.setdefault("lam", self.lam)
        self.rows.append({"iteration": iteration, **values})

    def column(self, name):
        return [row.get(name) for row in self.rows]

    @property
    def iterations(self) -> int:
        return self.rows[-1]["iteration"] if self.rows else 0

    def __len__(self):
        return len(self.rows)
