"""Service configuration: one config file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

ENV_PREFIX = "MASKEDIT_"


@dataclass
class ServiceConfig:
    checkpoint_path: Optional[str] = None
    vectors_dir: str = "vectors"
    sessions_dir: str = "sessions"
    default_embed_steps: int = 200
    default_edit_steps: int = 100
    progress_every: int = 5
    host: str = "127.0.0.1"
    port: int = 8321
    feature_seed: int = field(default=907)

    @classmethod
    def load(cls, path: Optional[str | os.PathLike] = None, env: Optional[dict] = None
             ) -> "ServiceConfig":
        """Read the JSON config file (when given), then apply env overrides.

        Every field can be overridden by MASKEDIT_<FIELD_UPPERCASE>.
        """
        data: dict = {}
        if path is not None:
            data = json.loads(Path(path).read_text())
        env = dict(os.environ if env is None else env)
        for f in fields(cls):
            key = ENV_PREFIX + f.name.upper()
            if key in env:
                raw = env[key]
                if f.type in ("int", int) or f.name in ("default_embed_steps",
                                                        "default_edit_steps",
                                                        "progress_every", "port",
                                                        "feature_seed"):
                    data[f.name] = int(raw)
                else:
                    data[f.name] = raw
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
