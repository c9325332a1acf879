import logging
import sys
from app.core.config import settings

class JsonMessageFilter(logging.Filter):
    """Escape quotes and newlines so each record stays one valid JSON line"""
    def filter(self, record):
        message = record.getMessage()
        record.msg = message.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        record.args = None
        return True

def configure_logging(level: str = None):
    level_name = (level or settings.LOG_LEVEL).upper()
    stream = sys.stdout if settings.LOG_STREAM.lower() == "stdout" else sys.stderr
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='{"level":"%(levelname)s","ts":"%(asctime)s","logger":"%(name)s","msg":"%(message)s"}',
        handlers=[logging.StreamHandler(stream)],
        force=True,
    )

    json_filter = JsonMessageFilter()
    root_logger = logging.getLogger()
    for handler in root_logger.handlers:
        handler.addFilter(json_filter)
