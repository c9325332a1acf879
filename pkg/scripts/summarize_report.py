"""
Script to summarize a JSON-lines report written by `pat experiment` or `pat ablation`
"""
import os
import sys
from collections import defaultdict

from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.domain.dtos.report import Phase  # noqa: E402
from app.infra.repositories.report_repository import ReportRepository  # noqa: E402
from app.services.ablation_service import size_trend, summarize_cells  # noqa: E402
from app.services.experiment_service import summarize_trials  # noqa: E402


def summarize(path: str) -> None:
    records = ReportRepository.read(path)
    counts = defaultdict(int)
    for record in records:
        counts[record.phase] += 1
    print(f"{path}: {len(records)} records " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))

    # stored summary rows exist only for multi-seed runs
    raw = [r for r in records if r.phase != Phase.SUMMARY.value]
    summaries = summarize_trials(raw) + summarize_cells(raw)
    trend = size_trend(summaries)
    if trend is not None:
        summaries.append(trend)
    for record in summaries:
        print(record.summary_line())


if __name__ == "__main__":
    load_dotenv(".env")
    paths = sys.argv[1:] or [os.path.join(os.getenv("PAT_OUTPUT_DIR", "./runs"), "small_budget.jsonl")]
    for report in paths:
        summarize(report)
