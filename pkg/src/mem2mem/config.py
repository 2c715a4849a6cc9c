"""Run configuration, named presets and the ablation chain."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

ABLATION_FLAGS = ("encoder_mem", "decoder_mem", "mem_transfer", "reg_comp", "reg_read")

# Model variants in the order each enables one more feature.
ABLATIONS = {
    "baseline": (),
    "encoder_mem": ABLATION_FLAGS[:1],
    "decoder_mem": ABLATION_FLAGS[:2],
    "mem_transfer": ABLATION_FLAGS[:3],
    "reg_comp": ABLATION_FLAGS[:4],
    "full": ABLATION_FLAGS,
}

ABLATION_LABELS = {
    "baseline": "Baseline HRED",
    "encoder_mem": "+ Encoder Mem",
    "decoder_mem": "+ Decoder Mem",
    "mem_transfer": "+ Mem Transfer",
    "reg_comp": "+ Reg comp",
    "full": "+ Reg read (Mem2Mem)",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    embed_size: int = 128
    hidden_size: int = 256
    attn_size: int = 256
    d_a: int = 128
    heads: int = 10
    max_vocab: int = 50_000
    lambda1: float = 1e-4
    lambda2: float = 1e-2
    coverage_loss: bool = False
    coverage_loss_weight: float = 1.0
    lr: float = 2e-4
    clip: float = 2.0
    batch_size: int = 16
    epochs: int = 15
    beam: int = 4
    max_decode_len: int = 200
    max_sections: int = 4
    max_section_tokens: int = 500
    max_summary_tokens: int = 200
    encoder_mem: bool = True
    decoder_mem: bool = True
    mem_transfer: bool = True
    reg_comp: bool = True
    reg_read: bool = True
    seed: int = 0
    dtype: str = "float32"
    init_scale: float = 0.1
    write_gate_bias: float = 0.0  # initial memory keep-gate bias
    log_every: int = 10
    checkpoint_every: int = 0

    def validate(self) -> "RunConfig":
        flags = [getattr(self, f) for f in ABLATION_FLAGS]
        n_on = sum(flags)
        if flags != [True] * n_on + [False] * (len(flags) - n_on):
            on = [f for f in ABLATION_FLAGS if getattr(self, f)]
            raise ConfigError(
                f"ablation flags must enable a prefix of {list(ABLATION_FLAGS)}; got {on}"
            )
        for name in ("embed_size", "hidden_size", "attn_size", "d_a", "heads", "batch_size", "beam", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_vocab < 4:
            raise ConfigError("max_vocab must be at least 4")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("regularizer weights must be nonnegative")
        return self

    @property
    def variant(self) -> str:
        on = tuple(f for f in ABLATION_FLAGS if getattr(self, f))
        for name, flags in ABLATIONS.items():
            if flags == on:
                return name
        return "custom"

    def with_variant(self, name: str) -> "RunConfig":
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; choose from {list(ABLATIONS)}")
        on = set(ABLATIONS[name])
        return self.replace(**{f: f in on for f in ABLATION_FLAGS})

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d).validate()


PRESETS = {
    "default": RunConfig(),
    "desk": RunConfig(
        embed_size=16,
        hidden_size=32,
        attn_size=32,
        d_a=16,
        heads=4,
        lr=2e-3,
        batch_size=8,
        epochs=80,
        max_decode_len=40,
        write_gate_bias=2.0,
        dtype="float32",
    ),
    "micro": RunConfig(
        embed_size=8,
        hidden_size=16,
        attn_size=16,
        d_a=8,
        heads=3,
        batch_size=1,
        epochs=1,
        max_decode_len=10,
        dtype="float64",
    ),
}


def _coerce(field_type, raw: str, key: str):
    t = field_type if isinstance(field_type, type) else {"int": int, "float": float, "bool": bool, "str": str}[field_type]
    if t is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return t(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected {t.__name__}, got {raw!r}") from None


def parse_overrides(pairs: dict[str, str]) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, raw in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(types[key], raw, key)
    return out


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def load_config(preset: str = "default", path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults from ``preset``, then the file, then CLI overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    values = PRESETS[preset].to_dict()
    if path is not None:
        values.update(parse_overrides(read_config_file(path)))
    if overrides:
        values.update(parse_overrides(overrides))
    return RunConfig(**values).validate()
