import logging
import threading
from pathlib import Path
from typing import Iterable, List, Optional

from app.core.errors import DataIOError
from app.domain.dtos.report import ReportRecord

logger = logging.getLogger(__name__)


class ReportRepository:
    """Append-only JSON-lines sink for report records.

    Records are also kept in memory so callers can summarize a run. With no
    path the repository is memory-only.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = Path(path) if path else None
        self.records: List[ReportRecord] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def insert(self, record: ReportRecord) -> ReportRecord:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as f:
                        f.write(record.model_dump_json() + "\n")
                except OSError as e:
                    logger.error(f"Failed to append report record to {self.path}: {e}")
                    raise DataIOError(f"{self.path}: cannot write report: {e}") from e
        return record

    def insert_many(self, records: Iterable[ReportRecord]) -> List[ReportRecord]:
        return [self.insert(record) for record in records]

    def find(self, phase: str) -> List[ReportRecord]:
        return [r for r in self.records if r.phase == phase]

    @staticmethod
    def read(path) -> List[ReportRecord]:
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataIOError(f"{path}: cannot read report: {e}") from e
        return [ReportRecord.model_validate_json(line) for line in lines if line.strip()]
