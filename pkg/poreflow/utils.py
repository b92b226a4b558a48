from __future__ import annotations

import hashlib
import json
from typing import Any


def _number(raw: str) -> int | float:
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def parse_value(current: Any, raw: str) -> Any:
    """Coerce a command-line string to the type of the value it replaces."""
    if isinstance(current, bool):
        return raw.lower() in {"1", "true", "yes", "on"}
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        lowered = raw.lower()
        if lowered in {"none", "null"}:
            return None
        try:
            return _number(raw)
        except ValueError:
            return raw
    return raw


def config_digest(values: dict[str, Any]) -> str:
    payload = json.dumps(values, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
