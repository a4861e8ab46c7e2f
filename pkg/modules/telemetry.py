"""
Module: Logging & telemetry
Named loggers for every solver module plus JSON-line telemetry events,
enabled with QIPM_TELEMETRY=1. Telemetry must never break a solve.
"""

import json
import logging
import os
from typing import Any, Dict


def get_logger(name: str) -> logging.Logger:
    """Return the `qipm.<name>` logger, attaching a stream handler if none is configured."""
    full_name = f"qipm.{name}"
    logger = logging.getLogger(full_name)
    if not logger.handlers:
        ch = logging.StreamHandler()
        ch.setFormatter(logging.Formatter(f"%(asctime)s %(levelname)s [{full_name}] %(message)s"))
        logger.addHandler(ch)
        logger.setLevel(os.getenv('QIPM_LOG_LEVEL', 'INFO').upper())
        logger.propagate = False
    return logger


logger = get_logger('telemetry')


def telemetry_enabled() -> bool:
    return os.getenv('QIPM_TELEMETRY', '0') == '1'


def emit_telemetry(payload: Dict[str, Any]) -> None:
    """Write `payload` as one `TELEMETRY {json}` line when QIPM_TELEMETRY=1."""
    try:
        if not telemetry_enabled():
            return
        j = json.dumps(payload, default=str, sort_keys=True)
        logger.info('TELEMETRY %s', j)
    except Exception:
        logger.exception('Failed to emit telemetry')
