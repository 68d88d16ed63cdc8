"""Typed run configuration and its TOML surface.

The config file mirrors the typed configs section by section: [engine],
[retrieval], [qa], [testee], [embedding], [budget].
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .budget import DEFAULT_COUNTED, MODE_API_CALLS, BudgetLedger
from .corpus import DEFAULT_CATEGORIES, DEFAULT_MIN_PARA_LEN
from .embedding import EmbeddingProviderConfig
from .errors import ConfigError
from .qa import QaConfig
from .retrieval import RetrievalConfig
from .testee import TesteeConfig

VARIANTS = ("full", "no_prune", "random_select")
INITIAL_MODES = ("category-uniform", "fully-random")


@dataclass
class EngineSettings:
    xi: float = 0.5
    gamma: float = 0.5
    variant: str = "full"
    seed: int = 0
    initial_mode: str = "category-uniform"
    categories: list[str] = field(default_factory=lambda: list(DEFAULT_CATEGORIES))
    max_steps: int = 0          # 0 = budget-bound only
    stale_source_rounds: int = 2  # retire sources after this many barren retrievals
    min_para_len: int = DEFAULT_MIN_PARA_LEN
    n_centroids: int = 16

    def __post_init__(self):
        if not (0.0 <= self.xi <= 1.0) or not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("xi and gamma must be in [0,1]")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.initial_mode not in INITIAL_MODES:
            raise ConfigError(f"initial_mode must be one of {INITIAL_MODES}")


@dataclass
class BudgetSettings:
    mode: str = MODE_API_CALLS
    limit: float = 1000.0
    counted_categories: list[str] = field(default_factory=lambda: list(DEFAULT_COUNTED))
    prices: dict[str, dict[str, float]] = field(default_factory=dict)

    def make_ledger(self) -> BudgetLedger:
        table = {
            model: (float(p["input_per_mtok"]), float(p["output_per_mtok"]))
            for model, p in self.prices.items()
        }
        return BudgetLedger(
            mode=self.mode,
            limit=self.limit,
            price_table=table,
            counted_categories=tuple(self.counted_categories),
        )


@dataclass
class RunConfig:
    engine: EngineSettings = field(default_factory=EngineSettings)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    qa: QaConfig = field(default_factory=QaConfig)
    testee: TesteeConfig = field(default_factory=TesteeConfig)
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    budget: BudgetSettings = field(default_factory=BudgetSettings)
    landscape_path: str = ""
    model_tag: str = "testee"

    def as_dict(self) -> dict:
        return asdict(self)


def _build_section(cls, data: dict, section: str):
    valid = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
    unknown = set(data) - valid
    if unknown:
        raise ConfigError(
            f"[{section}] has unknown keys: {sorted(unknown)}"
        )
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    cfg = RunConfig(
        engine=_build_section(EngineSettings, data.get("engine", {}), "engine"),
        retrieval=_build_section(RetrievalConfig, data.get("retrieval", {}), "retrieval"),
        qa=_build_section(QaConfig, data.get("qa", {}), "qa"),
        testee=_build_section(TesteeConfig, data.get("testee", {}), "testee"),
        embedding=_build_section(
            EmbeddingProviderConfig, data.get("embedding", {}), "embedding"
        ),
        budget=_build_section(BudgetSettings, data.get("budget", {}), "budget"),
        landscape_path=data.get("landscape_path", ""),
        model_tag=data.get("model_tag", "testee"),
    )
    return cfg


def config_from_dict(data: dict) -> RunConfig:
    return RunConfig(
        engine=EngineSettings(**data["engine"]),
        retrieval=RetrievalConfig(**data["retrieval"]),
        qa=QaConfig(**data["qa"]),
        testee=TesteeConfig(**data["testee"]),
        embedding=EmbeddingProviderConfig(**data["embedding"]),
        budget=BudgetSettings(**data["budget"]),
        landscape_path=data.get("landscape_path", ""),
        model_tag=data.get("model_tag", "testee"),
    )
