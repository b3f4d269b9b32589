"""Evaluation reports: mean accuracy with 95% confidence half-width.

Reports serialize as a human-readable table plus line-delimited JSON
records. Wall-clock time is kept on the in-memory object (and printed) but
never written to files, so report files are byte-identical across runs of
the same seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def ci95_half_width(accuracies: np.ndarray) -> float:
    """1.96 * sample standard deviation / sqrt(T); zero for T < 2."""
    t = accuracies.size
    if t < 2:
        return 0.0
    return float(1.96 * accuracies.std(ddof=1) / math.sqrt(t))


@dataclass
class EvalReport:
    method: str
    split: str
    n_way: int
    k_shot: int
    q_query: int
    num_tasks: int
    seed: int
    task_accuracies: np.ndarray
    wall_seconds: float = 0.0

    @property
    def mean_accuracy(self) -> float:
        return float(self.task_accuracies.mean())

    @property
    def ci95(self) -> float:
        return ci95_half_width(self.task_accuracies)

    def record(self) -> dict:
        return {
            "type": "eval_report",
            "method": self.method,
            "split": self.split,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "q_query": self.q_query,
            "num_tasks": self.num_tasks,
            "seed": self.seed,
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "task_accuracies": [float(a) for a in self.task_accuracies],
        }

    def summary(self) -> str:
        return (
            f"{self.method} {self.split} {self.n_way}-way {self.k_shot}-shot: "
            f"{100 * self.mean_accuracy:.2f} +- {100 * self.ci95:.2f} "
            f"({self.num_tasks} tasks, seed {self.seed})"
        )


@dataclass
class AblationReport:
    rows: list[tuple[str, EvalReport]] = field(default_factory=list)

    def table(self) -> str:
        width = max(len(label) for label, _ in self.rows) if self.rows else 0
        lines = [f"{'configuration':<{width}}  mean_acc  ci95"]
        for label, rep in self.rows:
            lines.append(
                f"{label:<{width}}  {100 * rep.mean_accuracy:8.2f}  {100 * rep.ci95:.2f}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class SweepReport:
    parameter: str  # "lambda" or "alpha"
    points: list[tuple[float, EvalReport]] = field(default_factory=list)

    def best(self) -> tuple[float, EvalReport]:
        return max(self.points, key=lambda p: (p[1].mean_accuracy, -p[0]))

    def best_position(self) -> str:
        """"interior" or "boundary", judged on the grid ordering."""
        values = [v for v, _ in self.points]
        best_value, _ = self.best()
        ordered = sorted(values)
        if best_value in (ordered[0], ordered[-1]):
            return "boundary"
        return "interior"

    def table(self) -> str:
        lines = [f"{self.parameter:>8}  mean_acc  ci95"]
        for value, rep in self.points:
            lines.append(f"{value:8.3f}  {100 * rep.mean_accuracy:8.2f}  {100 * rep.ci95:.2f}")
        best_value, _ = self.best()
        lines.append(f"best {self.parameter} = {best_value!r} ({self.best_position()})")
        return "\n".join(lines) + "\n"


def write_records(path: str, config_text: str, records: list[dict]) -> None:
    """Line-delimited JSON: a config echo record followed by report records."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"type": "config", "config": config_text}, sort_keys=True))
        fh.write("\n")
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def write_table(path: str, config_text: str, body: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# resolved config\n")
        for line in config_text.strip().split("\n"):
            fh.write(f"#   {line}\n")
        fh.write(body)
