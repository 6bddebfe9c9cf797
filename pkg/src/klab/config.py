"""Run configuration: ``key = value`` files, environment, then flags."""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

MAX_L = 10
MAX_P = 26
MAX_T = 2**20


def default_cache_dir() -> Path:
    env = os.environ.get("KLAB_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "klab"


@dataclass
class Config:
    machine_version: int = 1
    L: int = 4
    P: int = 24
    T: int = 1024
    workers: int = 1  # 0 = one per CPU
    cache_dir: Path = None
    output_format: str = "json"
    on_demand: bool = True

    def __post_init__(self):
        if self.cache_dir is None:
            self.cache_dir = default_cache_dir()
        self.cache_dir = Path(self.cache_dir)

    def validate(self) -> None:
        if not 0 <= self.L <= MAX_L:
            raise ValueError(f"L must be in [0, {MAX_L}]")
        if not 0 <= self.P <= MAX_P:
            raise ValueError(f"P must be in [0, {MAX_P}]")
        if not 0 <= self.T <= MAX_T:
            raise ValueError(f"T must be in [0, {MAX_T}]")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output_format must be csv or json")


_ALIASES = {"scale_l": "L", "l": "L", "prog_bits": "P", "p": "P", "budget": "T", "t": "T",
            "format": "output_format"}


def _coerce(name, text):
    kind = {f.name: f.type for f in fields(Config)}[name]
    if kind in ("int", int):
        return int(text)
    if kind in ("bool", bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name}: not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if name == "cache_dir":
        return Path(text)
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    names = {f.name for f in fields(Config)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.lower().replace("-", "_"), key)
        if key not in names:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, **overrides) -> Config:
    """File values first, then non-None ``overrides`` (flags win)."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = Config(**values)
    cfg.validate()
    return cfg
