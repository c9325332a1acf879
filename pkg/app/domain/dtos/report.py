from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional, Dict, Any
from enum import Enum

class Phase(str, Enum):
    PARENT = "parent"
    CHILD = "child"
    ENSEMBLE = "ensemble"
    INDEPENDENT = "independent"
    BAGGED_MEMBER = "bagged-member"
    BAGGED = "bagged"
    DIVERSITY = "diversity"
    ABLATION = "ablation"
    SUMMARY = "summary"
    LANDSCAPE = "landscape"

class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    train_accuracy: float
    lr: float
    test_accuracy: Optional[float] = None
    wall_time: float = 0.0

class TrainingLog(BaseModel):
    epochs: List[EpochRecord] = Field(default_factory=list)
    steps: int = 0
    last_lr: Optional[float] = None
    samples_seen: int = 0

    @property
    def losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

class ReportRecord(BaseModel):
    """One evaluation, written as one JSON line."""
    model_config = ConfigDict(use_enum_values=True)

    phase: Phase
    member_id: Optional[str] = None
    accuracy: Optional[float] = None
    nll: Optional[float] = None
    ece: Optional[float] = None
    brier: Optional[float] = None
    wall_time: float = 0.0
    seed: Optional[int] = None
    epochs: Optional[float] = None
    extra: Dict[str, Any] = Field(default_factory=dict)

    def summary_line(self) -> str:
        parts = [f"{self.phase:<13}", f"{self.member_id or '-':<14}"]
        for label, value in (("acc", self.accuracy), ("nll", self.nll), ("ece", self.ece)):
            if value is not None:
                parts.append(f"{label}={value:.4f}")
        for key, value in self.extra.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.4f}")
            elif isinstance(value, (int, str)):
                parts.append(f"{key}={value}")
        parts.append(f"t={self.wall_time:.1f}s")
        return "  ".join(parts)
