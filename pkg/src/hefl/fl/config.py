"""Experiment configuration: a nested, strictly validated schema loadable from YAML.

Top-level keys (all optional):

    seed: int                     # drives data, keys, training and encryption
    clients: int
    mode: encrypted | plaintext
    mirror: bool                  # also run the plaintext pipeline and report divergence
    rule:     {rule, c, l, score_mode}
    attack:   {kind, byzantine, scale, source, target}
    training: {lr, batch_size, local_epochs, max_rounds, patience, tolerance}
    data:     {kind, samples, dim, classes, separation, skew, val_fraction, images, labels}
    model:    {kind, hidden}
    crypto:   {ring_degree, depth, scale_bits, first_mod_bits, special_mod_bits, alpha,
               security_level, lazy_relin, hoisting, memory_budget, t_hoist, t_decompose,
               slot_sum_at_kgc, threads}
    output:   {transcript, dump_ciphertexts, redact_kgc}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..ckks import CkksParams
from ..distance import HOISTING_MODES
from ..errors import ParameterError
from ..robust import RuleConfig
from .attacks import AttackConfig
from .training import TrainingConfig


@dataclass(frozen=True)
class DataConfig:
    kind: str = "gaussian"
    samples: int = 2000
    dim: int = 20
    classes: int = 2
    separation: float = 2.5
    skew: float | None = None
    val_fraction: float = 0.2
    images: str | None = None
    labels: str | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "idx"):
            raise ParameterError(f"unknown data kind {self.kind!r}")
        if self.kind == "idx" and not (self.images and self.labels):
            raise ParameterError("idx data needs both 'images' and 'labels' paths")
        if not 0 < self.val_fraction < 1:
            raise ParameterError("val_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logistic"
    hidden: int = 32

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ParameterError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class CryptoConfig:
    ring_degree: int = 8192
    depth: int = 3
    scale_bits: int = 40
    first_mod_bits: int = 46
    special_mod_bits: int = 51
    alpha: int = 1
    security_level: int | None = 128
    lazy_relin: bool = True
    hoisting: str = "dynamic"
    memory_budget: int | None = None  # bytes; default is four ciphertexts
    t_hoist: float | None = None
    t_decompose: float | None = None
    slot_sum_at_kgc: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.hoisting not in HOISTING_MODES:
            raise ParameterError(f"hoisting must be one of {HOISTING_MODES}")

    def params(self) -> CkksParams:
        return CkksParams(ring_degree=self.ring_degree, depth=self.depth, scale_bits=self.scale_bits,
                          first_mod_bits=self.first_mod_bits, special_mod_bits=self.special_mod_bits,
                          alpha=self.alpha, security_level=self.security_level)


@dataclass(frozen=True)
class OutputConfig:
    transcript: str | None = None
    dump_ciphertexts: str | None = None
    redact_kgc: bool = False


_SECTIONS = {
    "rule": RuleConfig, "attack": AttackConfig, "training": TrainingConfig, "data": DataConfig,
    "model": ModelConfig, "crypto": CryptoConfig, "output": OutputConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    clients: int = 10
    mode: str = "encrypted"
    mirror: bool = False
    rule: RuleConfig = field(default_factory=RuleConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    crypto: CryptoConfig = field(default_factory=CryptoConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.mode not in ("encrypted", "plaintext"):
            raise ParameterError("mode must be 'encrypted' or 'plaintext'")
        if self.clients < 3:
            raise ParameterError("need at least 3 clients")
        self.rule.validate(self.clients)
        self.attack.check_ratio(self.clients)

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            value = dict(value or {})
            allowed = {f.name for f in fields(section)}
            bad = set(value) - allowed
            if bad:
                raise ParameterError(f"unknown keys in '{key}': {sorted(bad)}")
            try:
                kwargs[key] = section(**value)
            except TypeError as exc:
                raise ParameterError(f"bad '{key}' section: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **sections) -> "ExperimentConfig":
        """Copy with top-level fields replaced; dict values update the named section."""
        changes = {}
        for key, value in sections.items():
            if key in _SECTIONS and isinstance(value, dict):
                changes[key] = replace(getattr(self, key), **value)
            else:
                changes[key] = value
        return replace(self, **changes)

    def fingerprint(self) -> str:
        """Stable hash of everything that affects results (output locations excluded)."""
        body = self.to_dict()
        body.pop("output")
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_yaml(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
