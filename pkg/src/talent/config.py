"""Run configuration with defaults < config file < environment < flags precedence.

Environment variables use the TALENT_ prefix and upper-snake names, e.g.
TALENT_MANIFEST, TALENT_VLM_BASE_URL, TALENT_LLM_MODEL, TALENT_TRANSPORT.
The effective configuration is echoed into every report for reproducibility.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .client import EndpointConfig
from .evaluation import MatchPolicy
from .imaging import ResolutionPreset

ENV_PREFIX = "TALENT_"

# flat config keys (config-file / env / flag names, snake case)
SIMPLE_KEYS = (
    "manifest",
    "strategies",
    "resolution",
    "match_mode",
    "numeric_rel_tol",
    "concurrency",
    "cache_dir",
    "transport",
    "fixtures_dir",
    "output_dir",
    "seed",
    "limit",
    "categories",
    "prompts",
    "allow_upscale",
    "pad_to_square",
    "fail_fast",
)
ENDPOINT_KEYS = ("name", "base_url", "model", "api_key", "temperature", "top_p",
                 "max_tokens", "timeout", "max_retries", "requests_per_minute", "model_size_b")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    manifest: Optional[Path] = None
    strategies: list[str] = field(default_factory=lambda: ["talent"])
    vlm: Optional[EndpointConfig] = None
    llm: Optional[EndpointConfig] = None
    resolution: str = "native"
    allow_upscale: bool = False
    pad_to_square: bool = False
    match_mode: str = "normalized_containment"
    numeric_rel_tol: float = 1e-6
    concurrency: int = 4
    cache_dir: Optional[Path] = None
    transport: str = "live"
    fixtures_dir: Optional[Path] = None
    output_dir: Path = Path("out")
    seed: Optional[int] = None
    limit: Optional[int] = None
    categories: Optional[list[str]] = None
    prompts: Optional[Path] = None
    fail_fast: bool = False

    def resolution_preset(self) -> ResolutionPreset:
        return ResolutionPreset(
            target=self.resolution,
            allow_upscale=self.allow_upscale,
            pad_to_square=self.pad_to_square,
        )

    def match_policy(self) -> MatchPolicy:
        return MatchPolicy(mode=self.match_mode, numeric_rel_tol=self.numeric_rel_tol)

    def echo(self, prompt_library_hash: str = "") -> dict:
        """Effective-config snapshot embedded in reports (api keys withheld)."""

        def endpoint_echo(ep: Optional[EndpointConfig]) -> Optional[dict]:
            if ep is None:
                return None
            return {
                "name": ep.name,
                "base_url": ep.base_url,
                "model": ep.model,
                "temperature": ep.temperature,
                "top_p": ep.top_p,
                "max_tokens": ep.max_tokens,
                "model_size_b": ep.model_size_b,
            }

        return {
            "policy": {"mode": self.match_mode, "numeric_rel_tol": self.numeric_rel_tol},
            "resolution": self.resolution,
            "strategies": list(self.strategies),
            "endpoints": {"vlm": endpoint_echo(self.vlm), "llm": endpoint_echo(self.llm)},
            "transport": self.transport,
            "seed": self.seed,
            "limit": self.limit,
            "categories": self.categories,
            "prompt_library_hash": prompt_library_hash,
        }


def _parse_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def _env_values(environ: Mapping[str, str]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for key in SIMPLE_KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        if key in ("strategies", "categories"):
            values[key] = [s.strip() for s in raw.split(",") if s.strip()]
        elif key in ("concurrency", "seed", "limit"):
            values[key] = int(raw)
        elif key == "numeric_rel_tol":
            values[key] = float(raw)
        elif key in ("allow_upscale", "pad_to_square", "fail_fast"):
            values[key] = _parse_bool(raw)
        else:
            values[key] = raw
    for role in ("vlm", "llm"):
        ep: dict[str, Any] = {}
        for ep_key in ENDPOINT_KEYS:
            raw = environ.get(f"{ENV_PREFIX}{role.upper()}_{ep_key.upper()}")
            if raw is None:
                continue
            if ep_key in ("temperature", "top_p", "timeout", "model_size_b"):
                ep[ep_key] = float(raw)
            elif ep_key in ("max_tokens", "max_retries", "requests_per_minute"):
                ep[ep_key] = int(raw)
            else:
                ep[ep_key] = raw
        if ep:
            values[role] = ep
    return values


def _merge(base: dict[str, Any], overlay: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overlay.items():
        if value is None:
            continue
        if key in ("vlm", "llm") and isinstance(value, Mapping):
            nested = dict(merged.get(key) or {})
            nested.update({k: v for k, v in value.items() if v is not None})
            merged[key] = nested
        else:
            merged[key] = value
    return merged


def _endpoint_from(values: Mapping[str, Any], role: str) -> Optional[EndpointConfig]:
    if not values:
        return None
    if "base_url" not in values or "model" not in values:
        raise ConfigError(f"{role} endpoint needs base_url and model (got {sorted(values)})")
    kwargs = dict(values)
    kwargs.setdefault("name", role)
    return EndpointConfig(role=role, **kwargs)


def resolve_config(
    config_file: Optional[str | Path] = None,
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge the three override layers onto defaults and build a RunConfig."""
    environ = environ if environ is not None else os.environ
    merged: dict[str, Any] = {}

    path = config_file or environ.get(ENV_PREFIX + "CONFIG")
    if path:
        try:
            file_values = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        merged = _merge(merged, file_values)

    merged = _merge(merged, _env_values(environ))
    if flags:
        merged = _merge(merged, flags)

    config = RunConfig()
    for key in SIMPLE_KEYS:
        if key not in merged:
            continue
        value = merged[key]
        if key in ("manifest", "cache_dir", "fixtures_dir", "output_dir", "prompts"):
            value = Path(value)
        if key in ("strategies", "categories") and isinstance(value, str):
            value = [s.strip() for s in value.split(",") if s.strip()]
        setattr(config, key, value)
    config.vlm = _endpoint_from(merged.get("vlm") or {}, "vlm")
    config.llm = _endpoint_from(merged.get("llm") or {}, "llm")
    return config
