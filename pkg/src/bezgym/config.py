"""Reading the TOML-based configuration files."""
from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from bezgym.errors import ParseError


def load_toml(path=None, *, text: str | None = None) -> dict:
    if text is None:
        text = Path(path).read_text()
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ParseError(getattr(exc, "msg", str(exc)), line) from exc


def config_hash(cfg) -> str:
    """Stable short hash of a JSON-serializable config mapping."""
    blob = json.dumps(cfg, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "__dict__"):
        return vars(obj)
    return str(obj)
