"""Process-wide knobs: dimension cap and density-matrix validation."""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass, field


def _env_max_dim() -> int:
    raw = os.environ.get("CORRTHERMO_MAX_DIM")
    if raw is None:
        return 4096
    value = int(raw)
    if value < 2:
        raise ValueError("CORRTHERMO_MAX_DIM must be >= 2")
    return value


@dataclass
class Settings:
    max_dim: int = field(default_factory=_env_max_dim)
    # O(d^3) checks on states entering/leaving the engine
    validate_states: bool = True
    eig_clamp: float = 1e-12


settings = Settings()


@contextlib.contextmanager
def override(**changes):
    """Temporarily change fields of the global :data:`settings`."""
    old = {k: getattr(settings, k) for k in changes}
    for k, v in changes.items():
        setattr(settings, k, v)
    try:
        yield settings
    finally:
        for k, v in old.items():
            setattr(settings, k, v)
