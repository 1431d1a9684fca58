"""Experiment configuration: one flat key=value file drives every subcommand."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

REGIMES = ("PG", "PG+G", "PG+LM", "PG+LM+G", "FIXED_A", "ENSEMBLE", "DIRECT")


@dataclass
class ExperimentConfig:
    # corpus
    pretrain_size: int = 1400
    finetune_train_size: int = 3000
    finetune_dev_size: int = 250
    finetune_test_size: int = 250
    text_size: int = 3000
    grounding_sigma: float = 0.05
    corpus_seed: int = 7

    # model sizes
    emb: int = 32
    hidden: int = 64
    lm_emb: int = 32
    lm_hidden: int = 64
    ranker_emb: int = 32
    ranker_hidden: int = 64
    baseline_hidden: int = 32
    dropout: float = 0.1

    # reward and objective weights
    beta_lm: float = 0.1
    beta_g: float = 0.1
    alpha_pg: float = 1.0
    alpha_entr: float = 0.01
    alpha_b: float = 0.1

    # regime and seeds
    regime: str = "PG"
    seeds: tuple[int, ...] = (11, 12, 13)

    # schedules
    pretrain_epochs: int = 40
    pretrain_batch: int = 32
    pretrain_lr: float = 0.002
    pretrain_patience: int = 4
    pretrain_seed: int = 5
    lm_epochs: int = 8
    lm_batch: int = 32
    lm_lr: float = 0.002
    lm_seed: int = 6
    ranker_epochs: int = 6
    ranker_batch: int = 16
    ranker_lr: float = 0.002
    ranker_seed: int = 8
    ft_steps: int = 400
    ft_batch: int = 32
    ft_lr: float = 0.0005
    eval_interval: int = 25
    patience: int = 3
    stop_after: int = 10
    clip: float = 5.0
    ensemble_k: int = 4
    standardize_advantage: bool = False
    n_boot: int = 1000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; one of {REGIMES}")
        positives = ("pretrain_size", "finetune_train_size", "finetune_dev_size",
                     "finetune_test_size", "text_size", "emb", "hidden",
                     "lm_emb", "lm_hidden", "ranker_emb", "ranker_hidden",
                     "baseline_hidden", "pretrain_epochs", "pretrain_batch",
                     "lm_epochs", "lm_batch", "ranker_epochs", "ranker_batch",
                     "ft_steps", "ft_batch", "eval_interval", "patience",
                     "stop_after", "ensemble_k", "n_boot")
        for name in positives:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("grounding_sigma", "dropout", "beta_lm", "beta_g",
                     "alpha_pg", "alpha_entr", "alpha_b", "clip",
                     "pretrain_lr", "lm_lr", "ranker_lr", "ft_lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")

    def digest(self) -> str:
        text = "\n".join(f"{f.name}={getattr(self, f.name)}"
                         for f in fields(self))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seeds":
                v = ",".join(str(s) for s in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_value(name: str, raw: str, kind) -> object:
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind is tuple:
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {e}") from e
    raise ConfigError(f"unsupported config field type for {name}")


_FIELD_KINDS = {
    "seeds": tuple, "regime": str, "standardize_advantage": bool,
}


def _kind_of(name: str):
    if name in _FIELD_KINDS:
        return _FIELD_KINDS[name]
    default = getattr(ExperimentConfig, name, None)
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def load_config(path: str | Path | None,
                overrides: list[str] | None = None) -> ExperimentConfig:
    """Build a config from an optional key=value file plus CLI overrides."""
    names = {f.name for f in fields(ExperimentConfig)}
    kv: dict[str, object] = {}
    entries: list[tuple[str, str, str]] = []
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            k, v = stripped.split("=", 1)
            entries.append((k.strip(), v, f"{path}:{lineno}"))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        k, v = item.split("=", 1)
        entries.append((k.strip(), v, "command line"))
    for k, v, where in entries:
        if k not in names:
            raise ConfigError(f"{where}: unknown config key {k!r}")
        kv[k] = _parse_value(k, v, _kind_of(k))
    return ExperimentConfig(**kv)
