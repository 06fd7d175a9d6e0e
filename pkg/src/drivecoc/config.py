"""Run configuration: one JSON file with a section per component."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ._validation import ValidationError
from .codec import QuantizerSpec
from .dynamics import FitConfig
from .flow import ScheduleSpec
from .grpo import GrpoDemoConfig
from .meta_actions import DetectorConfig
from .metrics import ClosedLoopConfig
from .rewards import ConsistencyConfig, RewardWeights


@dataclass(frozen=True)
class FlowConfig:
    hidden_width: int = 256
    time_dim: int = 32
    n_steps: int = 6000
    batch_size: int = 64
    learning_rate: float = 3e-3
    delta_t: float = 0.1
    control_scale: tuple = (1.0, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "control_scale", tuple(self.control_scale))


@dataclass(frozen=True)
class MetricsConfig:
    a_comfort: float = 3.0


@dataclass(frozen=True)
class JudgeConfig:
    kind: str = "mock"
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_s: float = 0.1

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValidationError(f"unknown judge kind {self.kind!r}", field="judge.kind")


@dataclass(frozen=True)
class CurationConfig:
    fraction: float = 0.25
    beta: float = 1.0


@dataclass(frozen=True)
class PathsConfig:
    input: str | None = None
    output: str | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    flow: FlowConfig = field(default_factory=FlowConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    grpo: GrpoDemoConfig = field(default_factory=GrpoDemoConfig)
    curation: CurationConfig = field(default_factory=CurationConfig)
    closed_loop: ClosedLoopConfig = field(default_factory=ClosedLoopConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name: f for f in fields(cls)}
        extra = set(d) - set(known)
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}", field="config")
        kwargs = {}
        for name, value in d.items():
            if name == "seed":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ValidationError("seed must be an integer", field="seed", value=value)
                kwargs[name] = value
                continue
            section_cls = known[name].default_factory
            kwargs[name] = _section(section_cls, value, name)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}", field="config") from None
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object", field="config")
        return cls.from_dict(data)

    def with_seed(self, seed):
        if seed is None:
            return self
        return RunConfig(**{**{f.name: getattr(self, f.name) for f in fields(self)}, "seed": seed})

    def to_dict(self):
        return asdict(self)


def _section(cls, value, name):
    if not isinstance(value, dict):
        raise ValidationError(f"config section {name!r} must be an object", field=name)
    allowed = {f.name for f in fields(cls)}
    extra = set(value) - allowed
    if extra:
        raise ValidationError(f"unknown keys in {name!r}: {sorted(extra)}", field=name)
    try:
        return cls(**value)
    except TypeError as exc:
        raise ValidationError(f"bad config section {name!r}: {exc}", field=name) from None
