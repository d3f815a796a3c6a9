"""Engine hyperparameters and the key=value config file format."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values, or invalid combinations."""


@dataclass(frozen=True)
class Config:
    """All tunables of the lineage engine, with desk-scale defaults.

    ``column_bound <= 0`` disables lineage-column dropping entirely.  When
    ``containment_threshold`` is left unset it defaults to 1.0 with dropping
    disabled (ancestors are then provably containment-safe) and to 0.5 with
    dropping enabled.
    """

    dimension: int = 64
    max_vectors: int = 4
    w_max: float = 1.0
    w_avg: float = 1.0
    column_bound: int = 0
    dag_max_nodes: int = 1024
    dag_max_height: int = 10
    outsider_weight: float = 0.25
    interest_boost: float = 2.0
    containment_threshold: float | None = None
    seed: int = 7
    model_path: str | None = None
    store_path: str | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.max_vectors < 1:
            raise ConfigError("max_vectors must be >= 1")
        if self.w_max < 0 or self.w_avg < 0 or self.w_max + self.w_avg <= 0:
            raise ConfigError("w_max and w_avg must be nonnegative with a positive sum")
        if self.dag_max_nodes < 1 or self.dag_max_height < 1:
            raise ConfigError("dag_max_nodes and dag_max_height must be >= 1")
        if not 0.0 < self.outsider_weight < 0.5:
            raise ConfigError("outsider_weight must lie in (0, 0.5)")
        if self.interest_boost <= 1.0:
            raise ConfigError("interest_boost must be > 1")
        if self.containment_threshold is not None and not 0.0 <= self.containment_threshold <= 1.0:
            raise ConfigError("containment_threshold must lie in [0, 1]")

    @property
    def effective_containment_threshold(self) -> float:
        if self.containment_threshold is not None:
            return self.containment_threshold
        return 1.0 if self.column_bound <= 0 else 0.5

    def with_overrides(self, **kwargs: object) -> "Config":
        return replace(self, **kwargs)


_INT_KEYS = {"dimension", "max_vectors", "column_bound", "dag_max_nodes", "dag_max_height", "seed"}
_FLOAT_KEYS = {"w_max", "w_avg", "outsider_weight", "interest_boost", "containment_threshold"}
_STR_KEYS = {"model_path", "store_path"}
_ALL_KEYS = {f.name for f in fields(Config)}


def parse_config(text: str, source: str = "<config>") -> Config:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc
    return Config(**values)  # type: ignore[arg-type]


def load_config(path: str | Path) -> Config:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
