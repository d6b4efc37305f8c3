"""Configuration loading with defaults, JSON files, and environment overrides.

Keys are dotted (``db.path``). A config file may nest sections or use the
dotted keys directly; both normalize to the flat form. Environment variables
prefixed ``FAIRFLOW_`` override file values: ``FAIRFLOW_DB_PATH`` maps to
``db.path`` (the first underscore separates the section).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import FairflowError

ENV_PREFIX = "FAIRFLOW_"

DEFAULTS: dict[str, object] = {
    "db.path": "fairflow.db",
    "repo.managed_root": "managed",
    "repo.remote_root": "remote",
    "runner.backend": "mock",
    "runner.shell_template": (
        "podman run --rm -v {input_dir}:/data/in:ro -v {workdir}:/data/out {image} {args}"
    ),
    "runner.timeout_s": 1800,
    "importer.workers": 4,
    "importer.poll_interval_ms": 2000,
    "importer.workdir": "work",
    "forms.admin_only_publish": True,
    "analyzer.config_path": "slurm-config.ini",
    "analyzer.workdir": "analyzer-work",
    "analyzer.poll_interval_ms": 1000,
    "analyzer.convert_extensions": [".zarr"],
    "sim.queue_ticks": 1,
    "sim.run_ticks": 2,
    "sim.realtime": False,
    "api.bind_addr": "127.0.0.1:8344",
    "api.tokens": [],
    "api.ui_dist": "frontend/dist",
}

# Dotted keys whose string values name filesystem locations; they resolve
# relative to the config file's directory so a config tree is relocatable.
_PATH_KEYS = {
    "db.path",
    "repo.managed_root",
    "repo.remote_root",
    "importer.workdir",
    "analyzer.config_path",
    "analyzer.workdir",
    "api.ui_dist",
}


def _flatten(obj: dict, prefix: str = "") -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in obj.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and "." not in key and dotted not in _PATH_KEYS:
            out.update(_flatten(value, dotted + "."))
        else:
            out[dotted] = value
    return out


def _parse_env_value(raw: str) -> object:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


class Config:
    """Immutable view over defaults + file values + environment overrides."""

    def __init__(self, values: dict[str, object] | None = None, base_dir: Path | None = None):
        self._values = dict(DEFAULTS)
        self._values.update(values or {})
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()

    @classmethod
    def load(cls, path: str | Path | None = None, env: dict[str, str] | None = None) -> "Config":
        values: dict[str, object] = {}
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except OSError as exc:
                raise FairflowError("FATAL_CONFIG", f"cannot read config {path}: {exc}")
            except ValueError as exc:
                raise FairflowError("FATAL_CONFIG", f"config {path} is not valid JSON: {exc}")
            if not isinstance(raw, dict):
                raise FairflowError("FATAL_CONFIG", f"config {path} must be a JSON object")
            values = _flatten(raw)
            base_dir = path.resolve().parent
        env = os.environ if env is None else env
        for name, raw_value in env.items():
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX):]
            if "_" not in rest:
                continue
            section, remainder = rest.split("_", 1)
            values[f"{section.lower()}.{remainder.lower()}"] = _parse_env_value(raw_value)
        return cls(values, base_dir)

    def get(self, key: str, default: object = None) -> object:
        return self._values.get(key, default)

    def path(self, key: str) -> Path:
        value = self._values.get(key)
        if value is None:
            raise FairflowError("FATAL_CONFIG", f"missing path config {key}")
        p = Path(str(value))
        return p if p.is_absolute() else self.base_dir / p

    def as_dict(self) -> dict[str, object]:
        return dict(self._values)
