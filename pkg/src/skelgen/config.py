"""Shared configuration: a key=value file supplies defaults, flags override."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

# One flat namespace for file keys and CLI flags.
DEFAULTS: dict = {
    "backend": "mock",
    "mode": "skeleton",
    "strategy": "input_skeleton_emb",
    "k": 16,
    "n": 10,
    "temperature": 0.7,
    "top_p": 1.0,
    "frequency_penalty": 0.0,
    "presence_penalty": 0.0,
    "max_tokens": 128,
    "seed": 0,
    "jobs": 4,
    "example_order": "closest_last",
    "max_prompt_chars": 0,  # 0 disables the hard limit
    "model": "gpt-3.5-turbo",
    "base_url": "https://api.openai.com/v1",
    "timeout": 30.0,
    "retries": 3,
    "concurrency": 4,
    "hash_dim": 256,
    "skeleton_provider": "nn",
    "skeleton_url": "",
}


@dataclass(frozen=True)
class RunConfig:
    """Knobs the generation runner needs for one batch."""

    mode: str = "skeleton"
    strategy: str = "input_skeleton_emb"
    k: int = 16
    n: int = 10
    temperature: float = 0.7
    top_p: float = 1.0
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    max_tokens: int = 128
    seed: int = 0
    jobs: int = 4
    example_order: str = "closest_last"
    max_prompt_chars: int | None = None

    @classmethod
    def from_settings(cls, settings: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        kwargs = {key: value for key, value in settings.items() if key in names}
        if not kwargs.get("max_prompt_chars"):
            kwargs["max_prompt_chars"] = None
        return cls(**kwargs)


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return raw


def load_config_file(path: str | Path) -> dict:
    """Parse a key=value file; '#' starts a comment, unknown keys are errors."""
    settings: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        entry = line.split("#", 1)[0].strip()
        if not entry:
            continue
        if "=" not in entry:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in entry.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        settings[key] = _coerce(key, raw)
    return settings


def merge_settings(config_path: str | Path | None, overrides: dict) -> dict:
    """DEFAULTS, then the config file, then non-None flag overrides."""
    settings = dict(DEFAULTS)
    if config_path is not None:
        settings.update(load_config_file(config_path))
    settings.update({key: value for key, value in overrides.items() if value is not None})
    return settings
