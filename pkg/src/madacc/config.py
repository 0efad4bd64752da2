"""Run configuration loaded from YAML, with command-line overrides applied on top.

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .backend import DEFAULT_API_KEY_ENV, GenerationParams
from .corpus import CONTEXT_ESSAY, CONTEXT_PARAGRAPH
from .errors import ConfigError
from .protocol import DebateConfig

BACKEND_KINDS = ("live", "mock")

_PARAM_DEFAULTS = {
    "manager": DebateConfig.manager_params,
    "debater": DebateConfig.debater_params,
    "judge": DebateConfig.judge_params,
}


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    endpoint_url: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    mock_script_path: Path | None = None
    cache_dir: Path | None = None
    timeout: float = 120.0


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: Path
    split_file: Path
    output_dir: Path
    templates_dir: Path | None = None
    template_files: dict[str, Path] = field(default_factory=dict)
    context: str = CONTEXT_ESSAY
    backend: BackendConfig = field(default_factory=BackendConfig)
    debate: DebateConfig = field(default_factory=DebateConfig)
    parallelism: int = 1
    rate_limit_rpm: int | None = None
    source: Path | None = None

    def snapshot(self) -> dict[str, Any]:
        """Plain-data view of the resolved config for the run directory."""

        def plain(value):
            if isinstance(value, Path):
                return str(value)
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            if isinstance(value, (list, tuple)):
                return [plain(v) for v in value]
            return value

        data = plain(asdict(self))
        data.pop("source", None)
        return data


def _path(base: Path, value) -> Path | None:
    if value in (None, ""):
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


def _params(section: dict | None, default: GenerationParams) -> GenerationParams:
    section = dict(section or {})
    unknown = set(section) - {"model_id", "temperature", "max_output_tokens", "seed_hint"}
    if unknown:
        raise ConfigError(f"unknown generation parameters: {', '.join(sorted(unknown))}")
    try:
        return replace(default, **section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad generation parameters: {exc}") from None


def _require_exists(name: str, path: Path | None, kind: str = "any") -> None:
    if path is None:
        raise ConfigError(f"{name} is not set")
    ok = path.is_dir() if kind == "dir" else path.is_file() if kind == "file" else path.exists()
    if not ok:
        raise ConfigError(f"{name} does not exist: {path}")


def parse_config(data: dict, base_dir: Path, seed: int | None = None, parallelism: int | None = None,
                 source: Path | None = None) -> RunConfig:
    data = dict(data or {})
    backend_raw = dict(data.get("backend") or {})
    kind = backend_raw.get("kind", "mock")
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}, got {kind!r}")
    backend = BackendConfig(
        kind=kind,
        endpoint_url=backend_raw.get("endpoint_url"),
        api_key_env=backend_raw.get("api_key_env") or DEFAULT_API_KEY_ENV,
        mock_script_path=_path(base_dir, backend_raw.get("mock_script_path")),
        cache_dir=_path(base_dir, backend_raw.get("cache_dir")),
        timeout=float(backend_raw.get("timeout", 120.0)),
    )
    if kind == "mock":
        _require_exists("backend.mock_script_path", backend.mock_script_path, "file")
    elif not backend.endpoint_url:
        raise ConfigError("backend.endpoint_url is required for the live backend")

    debate_raw = dict(data.get("debate") or {})
    try:
        debate = DebateConfig(
            rounds=int(debate_raw.get("rounds", 2)),
            skip_threshold=float(debate_raw.get("skip_threshold", 1.0)),
            manager_params=_params(debate_raw.get("manager"), _PARAM_DEFAULTS["manager"]),
            debater_params=_params(debate_raw.get("debater"), _PARAM_DEFAULTS["debater"]),
            judge_params=_params(debate_raw.get("judge"), _PARAM_DEFAULTS["judge"]),
            rng_seed=int(seed if seed is not None else debate_raw.get("rng_seed", 0)),
            parse_attempts=int(debate_raw.get("parse_attempts", 3)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad debate settings: {exc}") from None

    par = int(parallelism if parallelism is not None else data.get("parallelism", 1))
    if par < 1:
        raise ConfigError("parallelism must be >= 1")
    rpm = data.get("rate_limit_rpm")
    if rpm is not None and int(rpm) < 1:
        raise ConfigError("rate_limit_rpm must be >= 1")
    context = data.get("context", CONTEXT_ESSAY)
    if context not in (CONTEXT_ESSAY, CONTEXT_PARAGRAPH):
        raise ConfigError(f"context must be {CONTEXT_ESSAY!r} or {CONTEXT_PARAGRAPH!r}")

    cfg = RunConfig(
        corpus_dir=_path(base_dir, data.get("corpus_dir")),
        split_file=_path(base_dir, data.get("split_file")),
        output_dir=_path(base_dir, data.get("output_dir") or "runs"),
        templates_dir=_path(base_dir, data.get("templates_dir")),
        template_files={k: _path(base_dir, v) for k, v in (data.get("templates") or {}).items()},
        context=context,
        backend=backend,
        debate=debate,
        parallelism=par,
        rate_limit_rpm=int(rpm) if rpm is not None else None,
        source=source,
    )
    _require_exists("corpus_dir", cfg.corpus_dir, "dir")
    _require_exists("split_file", cfg.split_file, "file")
    if cfg.templates_dir is not None:
        _require_exists("templates_dir", cfg.templates_dir, "dir")
    for role, path in cfg.template_files.items():
        _require_exists(f"templates.{role}", path, "file")
    return cfg


def load_config(path: Path | str, seed: int | None = None, parallelism: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data, path.resolve().parent, seed=seed, parallelism=parallelism, source=path)
