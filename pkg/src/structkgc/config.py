"""Run configuration: a flat key=value file validated before any compute.

Unknown keys, type errors and every constraint owned by a downstream
module (encoder dims, temperature range, sampler sizes, score-mode
consistency) are rejected at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .losses import LossConfig
from .model import ModelConfig
from .structural import AseKind
from .training import TrainConfig

# Documented full-scale defaults (desk-scale runs use the smaller values
# in RunConfig): queue 15360, 192 hardest negatives, 3 intra-relation
# negatives per instance, batch 768, temperature 0.05, margin 0.02.
PAPER_FULL_SCALE = {
    "queue_capacity": 15360,
    "hardest_k": 192,
    "ir_count": 3,
    "batch_size": 768,
    "tau_init": 0.05,
    "margin": 0.02,
}

LR_GRID = (5e-4, 5e-5, 1e-5)

_VALID_SPLITS = ("train", "valid", "test")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    dataset: str = ""
    min_token_freq: int = 2
    # model dims
    struct_dim: int = 64
    layers: int = 2
    hidden_dim: int = 64
    heads: int = 4
    max_len: int = 64
    ase_kind: str = "additive"
    share_text_encoders: bool = False
    # component switches
    use_text: bool = True
    use_ase: bool = True
    use_mh: bool = True
    use_ir: bool = True
    # loss
    tau_init: float = 0.05
    tau_min: float = 0.01
    tau_max: float = 1.0
    margin: float = 0.02
    beta: float = 0.5
    # negatives
    queue_capacity: int = 256
    hardest_k: int = 32
    mh_count: int = 64
    ir_count: int = 3
    momentum: float = 0.999
    # optimizer / loop
    lr: float = 5e-4
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    epochs: int = 10
    batch_size: int = 32
    # evaluation
    score_mode: str = "text"
    rerank_alpha: float = 0.0
    rerank_splits: tuple = ("train",)
    filter_splits: tuple = ("train", "valid", "test")
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self):
        try:
            AseKind(self.ase_kind)
        except ValueError:
            raise ConfigError(
                f"ase_kind must be one of "
                f"{[k.value for k in AseKind]}, got {self.ase_kind!r}"
            ) from None
        if self.score_mode not in ("text", "struct", "combined"):
            raise ConfigError(f"unknown score_mode {self.score_mode!r}")
        if self.score_mode in ("text", "combined") and not self.use_text:
            raise ConfigError(f"score_mode {self.score_mode!r} needs use_text=true")
        if self.score_mode in ("struct", "combined") and not self.use_ase:
            raise ConfigError(f"score_mode {self.score_mode!r} needs use_ase=true")
        if self.use_mh and not self.use_text:
            raise ConfigError("use_mh needs the text path (use_text=true)")
        if self.rerank_alpha < 0:
            raise ConfigError(
                f"rerank_alpha must be non-negative, got {self.rerank_alpha}"
            )
        for name in ("rerank_splits", "filter_splits"):
            splits = getattr(self, name)
            bad = [s for s in splits if s not in _VALID_SPLITS]
            if bad:
                raise ConfigError(f"{name} contains unknown splits {bad}")
        if self.min_token_freq < 1:
            raise ConfigError(
                f"min_token_freq must be at least 1, got {self.min_token_freq}"
            )
        # delegate the rest to the owning modules' own validation
        try:
            self.loss_config()
            self.train_config()
            if self.use_text:
                self.model_config(num_entities=2, num_base_relations=1,
                                  vocab_size=16)
            else:
                self.model_config(num_entities=2, num_base_relations=1,
                                  vocab_size=0)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    # ------------------------------------------------------------------
    def model_config(self, num_entities: int, num_base_relations: int,
                     vocab_size: int) -> ModelConfig:
        return ModelConfig(
            num_entities=num_entities,
            num_base_relations=num_base_relations,
            struct_dim=self.struct_dim,
            layers=self.layers,
            hidden_dim=self.hidden_dim,
            heads=self.heads,
            max_len=self.max_len,
            vocab_size=vocab_size,
            ase_kind=AseKind(self.ase_kind),
            share_text_encoders=self.share_text_encoders,
            use_text=self.use_text,
            use_ase=self.use_ase,
            tau_init=self.tau_init,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            tau_init=self.tau_init, tau_min=self.tau_min, tau_max=self.tau_max,
            margin=self.margin, beta=self.beta,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, clip_norm=self.clip_norm,
            seed=self.seed, use_mh=self.use_mh, use_ir=self.use_ir,
            queue_capacity=self.queue_capacity, hardest_k=self.hardest_k,
            mh_count=self.mh_count, ir_count=self.ir_count,
            momentum=self.momentum,
        )


def _coerce(field_type, raw: str, key: str):
    raw = raw.strip()
    if field_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if field_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if field_type is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if field_type is tuple:
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    return raw


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a key=value file; ``overrides`` win over file values."""
    values: dict = {}
    field_types = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str, "tuple": tuple}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected key=value")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in field_types:
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
            ftype = type_map.get(field_types[key], str)
            values[key] = _coerce(ftype, raw, key)
    if overrides:
        values.update(overrides)
    return RunConfig(**values)
