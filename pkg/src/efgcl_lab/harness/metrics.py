"""Per-iteration metrics and their CSV round trip."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

METRICS_HEADER = ["iteration", "reward_mean", "success_rate", "alpha", "stage", "value_loss", "wall_ms"]


@dataclass
class MetricsRow:
    iteration: int
    reward_mean: float
    success_rate: float
    alpha: float
    stage: int
    value_loss: float
    wall_ms: int = 0

    def cells(self) -> list[str]:
        return [str(self.iteration), f"{self.reward_mean:.6f}", f"{self.success_rate:.6f}", f"{self.alpha:.6f}",
                str(self.stage), f"{self.value_loss:.6f}", str(self.wall_ms)]


@dataclass
class RunMetrics:
    rows: list[MetricsRow] = field(default_factory=list)
    iterations_to_threshold: int | None = None
    final_success_rate: float | None = None
    final_alpha: float | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for r in self.rows:
                w.writerow(r.cells())

    @classmethod
    def read_csv(cls, path) -> "RunMetrics":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != METRICS_HEADER:
                raise ValueError(f"unexpected metrics header {header}")
            rows = [MetricsRow(int(c[0]), float(c[1]), float(c[2]), float(c[3]), int(c[4]), float(c[5]), int(c[6]))
                    for c in reader]
        last = 0
        for r in rows:
            if r.iteration <= last:
                raise ValueError("metrics rows must be strictly ordered by iteration")
            last = r.iteration
        return cls(rows)

    def write_summary(self, path, cfg, seed) -> None:
        reached = "never" if self.iterations_to_threshold is None else str(self.iterations_to_threshold)
        lines = [
            f"task: {cfg.task}" + (f" ({cfg.variant})" if cfg.task == "flip" else ""),
            f"efgcl: {'on' if cfg.efgcl else 'off'}",
            f"seed: {seed}",
            f"iterations_run: {len(self.rows)}",
            f"iterations_to_threshold: {reached}",
            f"final_success_rate: {self.final_success_rate if self.final_success_rate is not None else 'n/a'}",
            f"final_alpha: {self.final_alpha if self.final_alpha is not None else 'n/a'}",
        ]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
