"""Per-batch learning-rate schedules.

All schedules are pure functions of (t, T, parameters): t is the batch
iteration counted from 0 and T the total number of iterations of the run.
"""
import math
from dataclasses import dataclass

from app.core.errors import ConfigError
from app.domain.dtos.run_config import ScheduleKind


def parent_lr(t: float, T: float, eta1: float = 0.1, eta2: float = 0.001,
              decay_start: float = 0.5, decay_end: float = 0.9) -> float:
    """eta1 until decay_start*T, linear down to eta2 at decay_end*T, then eta2."""
    if T <= 0 or t < decay_start * T:
        return eta1
    if t >= decay_end * T:
        return eta2
    progress = (t - decay_start * T) / ((decay_end - decay_start) * T)
    return eta1 + (eta2 - eta1) * progress


def one_cycle_lr(t: float, T: float, eta_min: float, eta_max: float,
                 eta_final: float = 1e-7, warmup: float = 0.10) -> float:
    """Cosine warm-up from eta_min to eta_max over warmup*T, then cosine decay to eta_final."""
    peak = warmup * T
    if T <= 0:
        return eta_final
    if t < peak:
        return eta_max + 0.5 * (eta_min - eta_max) * (1 + math.cos(math.pi * t / peak))
    t_cur = t - peak
    if t_cur == 0:
        return eta_max
    t_max = T - peak
    return eta_final + 0.5 * (eta_max - eta_final) * (1 + math.cos(math.pi * t_cur / t_max))


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind
    lr: float = 0.001                 # constant rate
    lr_min: float = 0.001             # one-cycle start
    lr_max: float = 0.1               # one-cycle peak / step-linear start
    lr_final: float = 1e-7            # one-cycle end / step-linear floor
    warmup_frac: float = 0.10
    decay_start: float = 0.5
    decay_end: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.kind == ScheduleKind.CONSTANT and self.lr < 0:
            raise ConfigError(f"Constant learning rate must be >= 0, got {self.lr}")
        if self.kind != ScheduleKind.CONSTANT and min(self.lr_min, self.lr_max, self.lr_final) <= 0:
            raise ConfigError("Schedule learning rates must be positive")
        if self.kind == ScheduleKind.ONE_CYCLE and not 0 < self.warmup_frac < 1:
            raise ConfigError(f"warmup_frac must lie in (0, 1), got {self.warmup_frac}")
        if self.kind == ScheduleKind.STEP_LINEAR and not 0 <= self.decay_start < self.decay_end <= 1:
            raise ConfigError("step-linear needs 0 <= decay_start < decay_end <= 1")

    @classmethod
    def constant(cls, lr: float) -> "Schedule":
        return cls(ScheduleKind.CONSTANT, lr=lr)

    @classmethod
    def step_linear(cls, eta1: float = 0.1, eta2: float = 0.001,
                    decay_start: float = 0.5, decay_end: float = 0.9) -> "Schedule":
        return cls(ScheduleKind.STEP_LINEAR, lr_max=eta1, lr_min=eta2, lr_final=eta2,
                   decay_start=decay_start, decay_end=decay_end)

    @classmethod
    def one_cycle(cls, lr_min: float, lr_max: float, lr_final: float = 1e-7,
                  warmup_frac: float = 0.10) -> "Schedule":
        return cls(ScheduleKind.ONE_CYCLE, lr_min=lr_min, lr_max=lr_max,
                   lr_final=lr_final, warmup_frac=warmup_frac)

    def lr_at(self, t: float, T: float) -> float:
        if self.kind == ScheduleKind.CONSTANT:
            return self.lr
        if self.kind == ScheduleKind.STEP_LINEAR:
            return parent_lr(t, T, self.lr_max, self.lr_final, self.decay_start, self.decay_end)
        return one_cycle_lr(t, T, self.lr_min, self.lr_max, self.lr_final, self.warmup_frac)

    def final_lr(self, T: float) -> float:
        """Rate used on the last batch of a T-iteration run."""
        return self.lr_at(max(T - 1, 0), T)
