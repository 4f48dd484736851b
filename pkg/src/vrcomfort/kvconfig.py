"""Plain-text `key = value` config files (one pair per line, `#` comments)."""

from __future__ import annotations

from typing import Mapping


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv(pairs: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def load_kv(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def save_kv(path, pairs: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_kv(pairs))
