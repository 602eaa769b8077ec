"""Service configuration: key-value text file plus environment overrides.

The file format is deliberately small: one ``key = value`` pair per line,
``#`` comments, dotted keys for grouping. Credentials never live in the
file; they come from the environment (CARGOLOOP_API_KEY for the remote
backend, CARGOLOOP_API_TOKEN for inbound auth).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import CargoLoopError
from ..interpreter import BackendConfig, NoiseProfile


class ConfigError(CargoLoopError):
    pass


@dataclass(frozen=True)
class ThresholdSettings:
    mode: str = "fixed"
    fixed: float = 0.85
    precision: float = 0.9
    window: int = 200


@dataclass(frozen=True)
class ServiceConfig:
    database: Path
    listen: str = "127.0.0.1:8080"
    max_rounds: int = 3
    cache_size: int = 256
    transcripts: Path | None = None
    static_dir: Path | None = None
    head_path: Path | None = None
    default_prior: float = 0.9
    api_token: str | None = None
    backend: BackendConfig = field(
        default_factory=lambda: BackendConfig(kind="scripted", seed=42)
    )
    threshold: ThresholdSettings = field(default_factory=ThresholdSettings)

    def __post_init__(self):
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")
        if not self.database.exists():
            raise ConfigError(f"database path does not exist: {self.database}")
        if self.transcripts is not None and not self.transcripts.exists():
            raise ConfigError(f"transcript directory does not exist: {self.transcripts}")
        if self.head_path is not None and not self.head_path.exists():
            raise ConfigError(f"head file does not exist: {self.head_path}")


def parse_kv(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _get_float(values: dict[str, str], key: str, default: float) -> float:
    try:
        return float(values.get(key, default))
    except ValueError:
        raise ConfigError(f"{key}: {values[key]!r} is not a number") from None


def _get_int(values: dict[str, str], key: str, default: int) -> int:
    try:
        return int(values.get(key, default))
    except ValueError:
        raise ConfigError(f"{key}: {values[key]!r} is not an integer") from None


def _backend_from(values: dict[str, str], env: dict[str, str]) -> BackendConfig:
    kind = values.get("backend.kind", "scripted")
    slot_error = {}
    for key, raw in values.items():
        prefix = "backend.profile.slot_error."
        if key.startswith(prefix):
            slot_error[key[len(prefix) :]] = _get_float(values, key, 0.0)
    profile = NoiseProfile(
        default_error=_get_float(values, "backend.profile.default_error", 0.0),
        slot_error=slot_error,
        intent_error=_get_float(values, "backend.profile.intent_error", 0.0),
        confident_prob=_get_float(values, "backend.profile.confident_prob", 0.95),
        confident_spread=_get_float(values, "backend.profile.confident_spread", 0.0),
        flat_spread=_get_float(values, "backend.profile.flat_spread", 0.0),
        confident_wrong_rate=_get_float(values, "backend.profile.confident_wrong_rate", 0.0),
    )
    if kind == "scripted":
        return BackendConfig(
            kind="scripted", seed=_get_int(values, "backend.seed", 42), profile=profile
        )
    if kind == "remote":
        endpoint = env.get("CARGOLOOP_ENDPOINT") or values.get("backend.endpoint")
        if not endpoint:
            raise ConfigError("remote backend needs backend.endpoint or CARGOLOOP_ENDPOINT")
        return BackendConfig(
            kind="remote",
            endpoint=endpoint,
            model=values.get("backend.model"),
            api_key=env.get("CARGOLOOP_API_KEY"),
            timeout_s=_get_float(values, "backend.timeout_s", 30.0),
            max_in_flight=_get_int(values, "backend.max_in_flight", 4),
        )
    raise ConfigError(f"unknown backend.kind {kind!r}")


def load_config(path: str | Path, env: dict[str, str] | None = None) -> ServiceConfig:
    """Load a config file; environment supplies credential overrides."""
    env = dict(os.environ) if env is None else env
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = parse_kv(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(key: str) -> Path | None:
        raw = values.get(key)
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else (base / p)

    database = resolve("database")
    if database is None:
        raise ConfigError("config must set 'database'")

    threshold = ThresholdSettings(
        mode=values.get("threshold.mode", "fixed"),
        fixed=_get_float(values, "threshold.fixed", 0.85),
        precision=_get_float(values, "threshold.precision", 0.9),
        window=_get_int(values, "threshold.window", 200),
    )
    if threshold.mode not in ("fixed", "adaptive"):
        raise ConfigError(f"unknown threshold.mode {threshold.mode!r}")

    return ServiceConfig(
        database=database,
        listen=values.get("listen", "127.0.0.1:8080"),
        max_rounds=_get_int(values, "max_rounds", 3),
        cache_size=_get_int(values, "cache_size", 256),
        transcripts=resolve("transcripts"),
        static_dir=resolve("static_dir"),
        head_path=resolve("head"),
        default_prior=_get_float(values, "default_prior", 0.9),
        api_token=env.get("CARGOLOOP_API_TOKEN") or values.get("api_token") or None,
        backend=_backend_from(values, env),
        threshold=threshold,
    )
