"""Run configuration: storage geometry and cost weights."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .errors import ValidationError

COLUMN_TYPES = ("int", "string", "decimal")


@dataclass(frozen=True)
class Config:
    """Storage and cost-model knobs, overridable per run."""

    block_bytes: int = 4096
    buffer_blocks: int = 8000
    w_seek: float = 10.0
    w_read: float = 1.0
    w_write: float = 1.0
    w_cpu: float = 0.01
    node_cap: int = 200_000

    def validate(self) -> None:
        if self.block_bytes <= 0:
            raise ValidationError("block_bytes must be positive")
        if self.buffer_blocks < 3:
            raise ValidationError("buffer_blocks must be at least 3")
        for name in ("w_seek", "w_read", "w_write", "w_cpu"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")

    def blocks(self, cardinality: float, tuple_bytes: float) -> int:
        if cardinality <= 0:
            return 0
        return math.ceil(cardinality * tuple_bytes / self.block_bytes)

    def with_overrides(self, **kwargs) -> "Config":
        cfg = replace(self, **{k: v for k, v in kwargs.items() if v is not None})
        cfg.validate()
        return cfg


def load_config(path: str) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f for f in Config.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg = Config(**raw)
    cfg.validate()
    return cfg
