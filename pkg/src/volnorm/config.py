"""Plain-text ``key = value`` pipeline configuration.

Blank lines and lines starting with ``#`` are ignored. Unknown keys are an
error so typos do not silently fall back to defaults. Every key, its type
and its default are listed in :data:`SCHEMA`.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidConfig

__all__ = ["PipelineConfig", "SCHEMA", "load_config", "parse_config"]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    # corpus
    n_slices_choices: str = "17,24,33,48"
    size: int = 64
    # IS-Gen training
    image_size: int = 64
    lam: float = 0.03
    lr: float = 1e-3
    optimizer: str = "adam"
    on_epochs: int = 5
    off_epochs: int = 5
    cycles: int = 10
    warmup_epochs: int = 0
    d_max: int = 4
    n_triplets: int = 200
    n_val: int = 50
    # normalisation and selection
    target: int = 128
    window: int = 64
    # classification
    k: int = 5
    levels: int = 32
    features: str = "all"

    @property
    def slice_choices(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.n_slices_choices.split(","))


SCHEMA = {f.name: (f.type, f.default) for f in fields(PipelineConfig)}

_CASTS = {"int": int, "float": float, "str": str}


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "lambda":
            key = "lam"
        if key not in SCHEMA:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        kind = SCHEMA[key][0]
        try:
            values[key] = _CASTS[kind if isinstance(kind, str) else kind.__name__](value)
        except ValueError:
            raise InvalidConfig(f"line {lineno}: {key} expects {kind}, got {value!r}") from None
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"))
