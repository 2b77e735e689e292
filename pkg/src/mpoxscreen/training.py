"""Training-loop control logic: early stopping with patience.

Only the controller lives here; gradient work happens in an external
trainer. The config doubles as a provenance record carried in model
metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class TrainingControlError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    max_epochs: int = 200
    patience: int = 50
    learning_rate: float = 1e-4
    dropout: float = 0.20
    image_size: int = 224
    optimizer_name: str = "adam"
    min_delta: float = 0.0
    higher_is_better: bool = True
    monitored_metric: str = "val_accuracy"

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1:
            raise TrainingControlError("max_epochs and patience must be positive")
        if self.patience >= self.max_epochs:
            raise TrainingControlError(
                f"patience {self.patience} must be smaller than max_epochs {self.max_epochs}")
        if self.learning_rate <= 0 or self.image_size < 1:
            raise TrainingControlError("learning_rate and image_size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise TrainingControlError(f"dropout {self.dropout} outside [0, 1)")
        if self.min_delta < 0:
            raise TrainingControlError("min_delta must be nonnegative")

    def to_json_obj(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "learning_rate": self.learning_rate,
            "dropout": self.dropout,
            "image_size": self.image_size,
            "optimizer_name": self.optimizer_name,
            "min_delta": self.min_delta,
            "higher_is_better": self.higher_is_better,
            "monitored_metric": self.monitored_metric,
        }


@dataclass
class EarlyStopState:
    best_metric: float | None = None
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    stopped_at: int | None = None
    last_epoch: int = 0


def _improved(metric: float, best: float | None, cfg: TrainingConfig) -> bool:
    if best is None:
        return True
    if cfg.higher_is_better:
        return metric > best + cfg.min_delta
    return metric < best - cfg.min_delta


def observe_epoch(state: EarlyStopState, epoch: int, metric: float,
                  cfg: TrainingConfig) -> str:
    """Feed one epoch's monitored metric; returns "continue" or "stop".

    Epochs count from 1 and must arrive in increasing order. A strict
    improvement (beyond min_delta) resets the patience counter; the run
    stops once patience epochs pass without improvement, or at max_epochs.
    """
    if state.stopped_at is not None:
        raise TrainingControlError(
            f"run already stopped at epoch {state.stopped_at}")
    if epoch != state.last_epoch + 1:
        raise TrainingControlError(
            f"epoch {epoch} out of order; expected {state.last_epoch + 1}")
    if epoch > cfg.max_epochs:
        raise TrainingControlError(f"epoch {epoch} exceeds max_epochs {cfg.max_epochs}")
    if not math.isfinite(metric):
        raise TrainingControlError(
            f"monitored metric for epoch {epoch} is not finite: {metric}")
    state.last_epoch = epoch

    if _improved(metric, state.best_metric, cfg):
        state.best_metric = metric
        state.best_epoch = epoch
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement = epoch - state.best_epoch

    if state.epochs_since_improvement >= cfg.patience or epoch >= cfg.max_epochs:
        state.stopped_at = epoch
        return "stop"
    return "continue"


@dataclass
class ScheduleResult:
    state: EarlyStopState
    decisions: list[str] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        return self.state.best_epoch

    @property
    def best_metric(self) -> float | None:
        return self.state.best_metric

    @property
    def stopped_at(self) -> int | None:
        return self.state.stopped_at

    @property
    def epochs_run(self) -> int:
        return self.state.last_epoch


def run_schedule(metrics, cfg: TrainingConfig) -> ScheduleResult:
    """Drive observe_epoch over a whole metric sequence (stops early when
    told to); convenience for tests and offline analysis."""
    state = EarlyStopState()
    decisions: list[str] = []
    for epoch, metric in enumerate(metrics, start=1):
        decision = observe_epoch(state, epoch, float(metric), cfg)
        decisions.append(decision)
        if decision == "stop":
            break
    return ScheduleResult(state=state, decisions=decisions)
