"""Plain-text ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Values stay strings; the consumer
decides how to parse them (lists are comma separated).
"""

from __future__ import annotations

import hashlib
import json

from .errors import InputError


def parse_kv(text: str, source: str = "<string>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"{source}:{lineno}: empty key")
        if key in out:
            raise InputError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_kv(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_kv(fh.read(), str(path))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, values as strings)."""
    canon = json.dumps({str(k): str(v) for k, v in cfg.items()}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
