"""Pipeline configuration read from an INI file.

Relative paths are resolved against the directory holding the config file.
Every seed has a fixed default so no run depends on the clock.

Example::

    [paths]
    store = store
    loss_records = loss_records.csv
    rasters = rasters
    masks = masks

    [events]
    ids = 2, 9

    [train]
    models = logistic, gbt
    seed = 0
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .core import TASKS
from .models.base import TABLE1_CONFIGS
from .raster import BUFFER_WINDOWS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    store: Path
    gazetteer: Path | None = None
    events: Path | None = None
    loss_records: Path | None = None
    subreddits: Path | None = None
    archive: Path | None = None
    rasters: Path | None = None
    masks: Path | None = None
    audit_sheet: Path | None = None
    perception: Path | None = None


@dataclass(frozen=True)
class NewsConfig:
    client: str = "stub"  # stub | gnews
    stub_responses: Path | None = None
    endpoint: str = "https://gnews.io/api/v4/search"
    api_key_env: str = "GNEWS_API_KEY"
    cap: int = 100
    page_size: int = 10
    rate_limit_per_minute: float = 60.0


@dataclass(frozen=True)
class ChatSection:
    client: str = "heuristic"  # heuristic | http
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    api_key_env: str = "OPENAI_API_KEY"
    max_tokens: int = 800
    timeout: float = 60.0
    retries: int = 2
    token_budget: int = 6000
    merge_sources: bool = False


@dataclass(frozen=True)
class FeaturesConfig:
    windows: tuple[int, ...] = BUFFER_WINDOWS
    pre_offset_days: int = 1
    post_offset_days: int = 1
    workers: int = 1


@dataclass(frozen=True)
class TrainConfig:
    models: tuple[str, ...] = tuple(TABLE1_CONFIGS)
    tasks: tuple[str, ...] = ("property", "crop")
    folds: int = 5
    seed: int = 0
    baseline_draws: int = 100_000
    workers: int = 1
    per_event: bool = False


@dataclass(frozen=True)
class AuditConfig:
    seed: int = 0
    sample_size: int = 12


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig
    source: Path | None = None
    event_ids: tuple[int, ...] = ()
    news: NewsConfig = NewsConfig()
    chat: ChatSection = ChatSection()
    features: FeaturesConfig = FeaturesConfig()
    train: TrainConfig = TrainConfig()
    audit: AuditConfig = AuditConfig()
    keywords: dict = field(default_factory=dict)
    text: str = ""
    overrides: tuple = ()

    @property
    def config_hash(self) -> str:
        """Digest of the config text plus any command-line overrides."""
        payload = self.text + "".join(f"\n#override {k}={v}" for k, v in self.overrides)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.replace(",", " ").split())


def _words(raw: str) -> tuple[str, ...]:
    return tuple(x for x in raw.replace(",", " ").split())


def _section(cp: configparser.ConfigParser, name: str, cls, base: Path, path_keys=()):
    if not cp.has_section(name):
        return {}
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in cp.items(name):
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        raw = raw.strip()
        default = known[key].default
        try:
            if key in path_keys:
                out[key] = (base / raw).resolve() if raw else None
            elif isinstance(default, bool):
                out[key] = cp.getboolean(name, key)
            elif isinstance(default, int):
                out[key] = int(raw)
            elif isinstance(default, float):
                out[key] = float(raw)
            elif isinstance(default, tuple):
                out[key] = _ints(raw) if default and isinstance(default[0], int) else _words(raw)
            else:
                out[key] = raw
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    return out


def parse_config(text: str, base_dir: str | Path = ".", source: Path | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = Path(base_dir)
    allowed = {"paths", "events", "news", "chat", "features", "train", "audit", "keywords"}
    extra = set(cp.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    path_keys = tuple(f.name for f in fields(PathsConfig))
    paths = _section(cp, "paths", PathsConfig, base, path_keys)
    if not paths.get("store"):
        raise ConfigError("[paths] store is required")
    event_ids = _ints(cp.get("events", "ids", fallback=""))
    cfg = PipelineConfig(
        paths=PathsConfig(**paths),
        source=source,
        event_ids=event_ids,
        news=NewsConfig(**_section(cp, "news", NewsConfig, base, ("stub_responses",))),
        chat=ChatSection(**_section(cp, "chat", ChatSection, base)),
        features=FeaturesConfig(**_section(cp, "features", FeaturesConfig, base)),
        train=TrainConfig(**_section(cp, "train", TrainConfig, base)),
        audit=AuditConfig(**_section(cp, "audit", AuditConfig, base)),
        keywords={k: list(_words(v)) for k, v in cp.items("keywords")} if cp.has_section("keywords") else {},
        text=text,
    )
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, path.resolve())


def validate(cfg: PipelineConfig) -> None:
    for f in fields(PathsConfig):
        p = getattr(cfg.paths, f.name)
        if f.name != "store" and p is not None and not p.exists():
            raise ConfigError(f"[paths] {f.name} does not exist: {p}")
    if cfg.news.client not in ("stub", "gnews"):
        raise ConfigError(f"[news] client must be stub or gnews, got {cfg.news.client!r}")
    if cfg.news.client == "stub" and cfg.news.stub_responses is not None and not cfg.news.stub_responses.exists():
        raise ConfigError(f"[news] stub_responses does not exist: {cfg.news.stub_responses}")
    if cfg.chat.client not in ("heuristic", "http"):
        raise ConfigError(f"[chat] client must be heuristic or http, got {cfg.chat.client!r}")
    bad = set(cfg.features.windows) - set(BUFFER_WINDOWS)
    if bad or not cfg.features.windows:
        raise ConfigError(f"[features] windows must be drawn from {BUFFER_WINDOWS}")
    unknown = set(cfg.train.models) - set(TABLE1_CONFIGS)
    if unknown:
        raise ConfigError(f"[train] unknown models {sorted(unknown)}; choose from {list(TABLE1_CONFIGS)}")
    if set(cfg.train.tasks) - set(TASKS):
        raise ConfigError(f"[train] tasks must be drawn from {list(TASKS)}")
    if cfg.train.folds < 2:
        raise ConfigError("[train] folds must be at least 2")


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    """Apply CLI flag overrides (None values are ignored)."""
    kw = {k: v for k, v in kw.items() if v is not None}
    if not kw:
        return cfg
    out = replace(cfg, overrides=cfg.overrides + tuple(sorted((k, repr(v)) for k, v in kw.items())))
    if "event_ids" in kw:
        out = replace(out, event_ids=tuple(kw.pop("event_ids")))
    if "windows" in kw:
        out = replace(out, features=replace(out.features, windows=tuple(kw.pop("windows"))))
    if "store" in kw:
        out = replace(out, paths=replace(out.paths, store=Path(kw.pop("store")).resolve()))
    if "seed" in kw:
        out = replace(out, train=replace(out.train, seed=kw.pop("seed")))
    if "workers" in kw:
        w = kw.pop("workers")
        out = replace(out, train=replace(out.train, workers=w), features=replace(out.features, workers=w))
    if kw:
        raise ConfigError(f"unsupported overrides {sorted(kw)}")
    validate(out)
    return out
