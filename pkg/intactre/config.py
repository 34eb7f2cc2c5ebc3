"""
Run configuration: a TOML file mapped onto frozen dataclasses.

Each table of the file (``[data]``, ``[model]``, ``[train]``, ``[eval]``,
``[synth]``, ``[ablation]``) fills the dataclass of the same name; keys that
are not fields, or values of the wrong type, are rejected.
"""

import dataclasses
from dataclasses import dataclass, field
import sys
import typing
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar

import torch
from typing_validation import validate

from .numerics import ConfigurationError
from .synth import SynthConfig
from .utils import PathLike

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FUSION_STRATEGIES = ("insrl", "insrl-avg", "mv-avg", "mv-att")
FUSION_FORMS = ("learnable", "closed")
POOLINGS = ("attention", "mean")
QUERY_POLICIES = ("per-relation", "global")
PRECISIONS = {"float32": torch.float32, "float64": torch.float64}
DEFAULT_INTACT_DIMS = (300, 350, 400, 450, 500)


@dataclass(frozen=True)
class DataConfig:
    source: str = "corpus"
    train_sentences: Optional[str] = None
    test_sentences: Optional[str] = None
    relations: Optional[str] = None
    descriptions: Optional[str] = None
    types: Optional[str] = None
    word_vectors: Optional[str] = None
    dataset: str = "dataset.car"
    min_count: int = 1
    sequence_length: int = 120
    typeset_size: int = 15
    max_relative_position: int = 60
    max_bag_size: int = 500
    test_grouping: str = "pair"
    max_bags: Optional[int] = None
    max_test_bags: Optional[int] = None
    top_relations: Optional[int] = None

    def __post_init__(self) -> None:
        _choice("data", "source", self.source, ("corpus", "synthetic"))
        _choice("data", "test_grouping", self.test_grouping, ("pair", "relation"))
        if self.sequence_length < 1 or self.typeset_size < 1 or self.max_relative_position < 1 or self.max_bag_size < 1:
            raise ConfigurationError("[data] lengths and sizes must be positive")


@dataclass(frozen=True)
class ModelConfig:
    d_word: int = 50
    d_position: int = 14
    d_type: int = 16
    d_model: int = 128
    d_intact: int = 400
    conv_width: int = 7
    conv_layers: int = 4
    heads: int = 8
    pooling: str = "attention"
    share_description_encoder: bool = False
    share_type_encoder: bool = False
    fusion: str = "insrl"
    fusion_form: str = "learnable"
    ridge: float = 1e-3
    query: str = "per-relation"
    views: Tuple[bool, bool, bool] = (True, True, True)

    def __post_init__(self) -> None:
        _choice("model", "fusion", self.fusion, FUSION_STRATEGIES)
        _choice("model", "fusion_form", self.fusion_form, FUSION_FORMS)
        _choice("model", "pooling", self.pooling, POOLINGS)
        _choice("model", "query", self.query, QUERY_POLICIES)
        if self.d_intact <= self.d_model:
            raise ConfigurationError(f"[model] d_intact ({self.d_intact}) must exceed d_model ({self.d_model})")
        if self.d_position % 2:
            raise ConfigurationError(f"[model] d_position must be even (two halves), got {self.d_position}")
        if self.d_model % self.heads:
            raise ConfigurationError(f"[model] d_model ({self.d_model}) must be divisible by heads ({self.heads})")
        if self.conv_width % 2 == 0:
            raise ConfigurationError(f"[model] conv_width must be odd, got {self.conv_width}")
        if self.ridge <= 0:
            raise ConfigurationError("[model] ridge must be positive")
        if not any(self.views):
            raise ConfigurationError("[model] at least one view must be present")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 200
    epochs: int = 80
    runs: int = 5
    seed: int = 0
    precision: str = "float32"
    reconstruction_weight: float = 0.0
    clip_norm: Optional[float] = None
    checkpoint_every: int = 1
    shuffle: bool = True

    def __post_init__(self) -> None:
        _choice("train", "optimizer", self.optimizer, ("sgd",))
        _choice("train", "precision", self.precision, tuple(PRECISIONS))
        if self.batch_size < 1 or self.epochs < 0 or self.runs < 1:
            raise ConfigurationError("[train] batch_size and runs must be positive, epochs non-negative")
        if self.learning_rate <= 0 or self.reconstruction_weight < 0:
            raise ConfigurationError("[train] learning_rate must be positive, reconstruction_weight non-negative")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigurationError("[train] clip_norm must be positive")

    def seeds(self) -> Tuple[int, ...]:
        return tuple(self.seed + k for k in range(self.runs))

    @property
    def dtype(self) -> torch.dtype:
        return PRECISIONS[self.precision]


@dataclass(frozen=True)
class EvalConfig:
    batch_size: int = 200
    top_k: Optional[int] = None


@dataclass(frozen=True)
class AblationConfig:
    suite: str = "fusion"
    seeds: Optional[Tuple[int, ...]] = None
    scheduler: str = "synchronous"
    intact_dims: Tuple[int, ...] = DEFAULT_INTACT_DIMS

    def __post_init__(self) -> None:
        _choice("ablation", "suite", self.suite, ("views", "fusion", "dx"))
        # cells reseed the process-wide torch generator, so they cannot share a process concurrently
        _choice("ablation", "scheduler", self.scheduler, ("synchronous", "processes"))


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    out_dir: str = "runs"

    def seeds(self) -> Tuple[int, ...]:
        if self.ablation.seeds is not None:
            return self.ablation.seeds
        return self.train.seeds()

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _choice(section: str, key: str, value: str, allowed: Tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigurationError(f"[{section}] {key} must be one of {', '.join(allowed)}; got '{value}'")


_C = TypeVar("_C")


def _coerce(value: Any, hint: Any) -> Any:
    # TOML arrays become tuples, integers become floats where a float is expected
    if isinstance(value, list):
        args = typing.get_args(hint)
        if typing.get_origin(hint) is typing.Union:
            args = typing.get_args(next((a for a in args if typing.get_origin(a) is tuple), hint))
        if len(args) == 2 and args[1] is Ellipsis:
            args = (args[0],) * len(value)
        if len(args) != len(value):
            args = (None,) * len(value)
        return tuple(_coerce(v, a) for v, a in zip(value, args))
    if (hint is float or float in typing.get_args(hint)) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def section_from_dict(cls: Type[_C], section: str, values: Mapping[str, Any]) -> _C:
    """
    Build the dataclass ``cls`` from one TOML table, checking keys and types.
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}  # type: ignore [arg-type]
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigurationError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in values.items():
        value = _coerce(value, hints[key])
        try:
            validate(value, hints[key])
        except TypeError as e:
            raise ConfigurationError(f"[{section}] {key}: expected {hints[key]}, got {value!r}") from e
        kwargs[key] = value
    return cls(**kwargs)


_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "synth": SynthConfig,
    "ablation": AblationConfig,
}


def config_from_dict(values: Mapping[str, Any]) -> RunConfig:
    unknown = sorted(set(values) - set(_SECTIONS) - {"out_dir"})
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(unknown)}")
    sections = {name: section_from_dict(cls, name, values.get(name, {})) for name, cls in _SECTIONS.items()}
    out_dir = values.get("out_dir", "runs")
    if not isinstance(out_dir, str):
        raise ConfigurationError("out_dir must be a string")
    config = RunConfig(out_dir=out_dir, **sections)  # type: ignore [arg-type]
    try:
        config.synth.validate()
    except ValueError as e:
        raise ConfigurationError(f"[synth] {e}") from e
    return config


def load_config(path: Optional[PathLike] = None, seed: Optional[int] = None, out_dir: Optional[str] = None) -> RunConfig:
    """
    Read a TOML run configuration; ``seed`` and ``out_dir`` override the file.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as stream:
            try:
                values = tomllib.load(stream)
            except tomllib.TOMLDecodeError as e:
                raise ConfigurationError(f"{path}: {e}") from e
    config = config_from_dict(values)
    if seed is not None:
        config = dataclasses.replace(config, train=dataclasses.replace(config.train, seed=seed),
                                     synth=dataclasses.replace(config.synth, seed=seed))
    if out_dir is not None:
        config = dataclasses.replace(config, out_dir=out_dir)
    return config
