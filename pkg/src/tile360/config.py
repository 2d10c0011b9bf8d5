"""INI experiment configuration.

Relative paths are resolved against the config file's directory. Every key
and its default is listed in ``DEFAULTS``; ``tile360 gen-fixtures`` writes a
complete reference file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .baselines import BaselineConfig
from .madrl.trainer import TrainConfig
from .qoe import PRESETS, QoEWeights

POLICIES = ("mappo", "ippo", "bb", "rb", "mpc", "dynamic", "random")
LEARNED = ("mappo", "ippo")

DEFAULTS: dict[str, dict[str, str]] = {
    "experiment": {
        "policy": "mappo",
        "objective": "(1,1,1,1)",
        "split": "0.8",
        "repetitions": "1",
        "seed": "0",
        "out": "results",
    },
    "env": {
        "manifest": "manifest.txt",
        "traces": "traces",
        "trace_offset_mbps": "3.0",
        "predictor": "oracle",
        "predictions": "predictions.txt",
        "viewpoints": "viewpoints.txt",
        "checkpoint": "",
        "codebook": "",
        "agents": "3",
        "history_len": "8",
        "max_buffer_s": "60.0",
        "fov": "100,100",
        "signed_variation": "false",
    },
    "train": {
        "gamma": "0.99",
        "lam": "0.95",
        "clip_eps": "0.2",
        "actor_lr": "1e-4",
        "critic_lr": "1e-4",
        "epochs": "4",
        "minibatch": "64",
        "episodes": "200",
        "episodes_per_update": "4",
        "entropy_coef": "0.01",
        "hidden": "64,64",
        "reward_scale": "1.0",
    },
    "baselines": {
        "bb_low_s": "5.0",
        "bb_high_s": "15.0",
        "rb_history": "5",
        "mpc_horizon": "3",
        "dynamic_threshold_s": "10.0",
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class EnvSpec:
    manifest: Path
    traces: Path
    trace_offset_mbps: float = 3.0
    predictor: str = "oracle"
    predictions: Path | None = None
    viewpoints: Path | None = None
    checkpoint: Path | None = None
    codebook: Path | None = None
    agents: int = 3
    history_len: int = 8
    max_buffer_s: float = 60.0
    fov: tuple[float, float] = (100.0, 100.0)
    signed_variation: bool = False


@dataclass
class ExperimentSpec:
    policy: str
    env: EnvSpec
    train: TrainConfig
    baselines: BaselineConfig
    objective: str = "(1,1,1,1)"
    split: float = 0.8
    repetitions: int = 1
    seed: int = 0
    out: Path = Path("results")
    source: Path | None = field(default=None, compare=False)

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if not 0 < self.split < 1:
            raise ConfigError("split fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.objective.replace(" ", "") not in PRESETS:
            raise ConfigError(f"invalid objective preset {self.objective!r}; choose from {', '.join(PRESETS)}")
        if self.env.predictor not in ("oracle", "baseline", "model"):
            raise ConfigError(f"unknown predictor {self.env.predictor!r}")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def weights(self) -> QoEWeights:
        return QoEWeights.preset(self.objective)

    def with_overrides(self, **kw) -> "ExperimentSpec":
        return replace(self, **kw)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(path: str | Path | None = None, text: str | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    base = Path(".")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        base = p.parent
    try:
        if path is not None:
            cp.read(p)
        if text is not None:
            cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - set(DEFAULTS[section])
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")

    def rel(value: str) -> Path | None:
        if not value:
            return None
        q = Path(value)
        return q if q.is_absolute() else base / q

    try:
        e, t, b, x = cp["env"], cp["train"], cp["baselines"], cp["experiment"]
        fov = _floats(e["fov"])
        env = EnvSpec(
            manifest=rel(e["manifest"]),
            traces=rel(e["traces"]),
            trace_offset_mbps=float(e["trace_offset_mbps"]),
            predictor=e["predictor"].strip(),
            predictions=rel(e["predictions"]),
            viewpoints=rel(e["viewpoints"]),
            checkpoint=rel(e["checkpoint"]),
            codebook=rel(e["codebook"]),
            agents=int(e["agents"]),
            history_len=int(e["history_len"]),
            max_buffer_s=float(e["max_buffer_s"]),
            fov=(fov[0], fov[1]),
            signed_variation=_bool(e["signed_variation"]),
        )
        policy = x["policy"].strip()
        train = TrainConfig(
            gamma=float(t["gamma"]),
            lam=float(t["lam"]),
            clip_eps=float(t["clip_eps"]),
            actor_lr=float(t["actor_lr"]),
            critic_lr=float(t["critic_lr"]),
            epochs=int(t["epochs"]),
            minibatch=int(t["minibatch"]),
            episodes=int(t["episodes"]),
            episodes_per_update=int(t["episodes_per_update"]),
            entropy_coef=float(t["entropy_coef"]),
            hidden=tuple(int(v) for v in _floats(t["hidden"])),
            reward_scale=float(t["reward_scale"]),
            mode=policy if policy in LEARNED else "mappo",
            seed=int(x["seed"]),
        )
        baselines = BaselineConfig(
            bb_low_s=float(b["bb_low_s"]),
            bb_high_s=float(b["bb_high_s"]),
            rb_history=int(b["rb_history"]),
            mpc_horizon=int(b["mpc_horizon"]),
            dynamic_threshold_s=float(b["dynamic_threshold_s"]),
        )
        spec = ExperimentSpec(
            policy=policy,
            env=env,
            train=train,
            baselines=baselines,
            objective=x["objective"].strip(),
            split=float(x["split"]),
            repetitions=int(x["repetitions"]),
            seed=int(x["seed"]),
            out=rel(x["out"]),
            source=Path(path) if path else None,
        )
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    spec.validate()
    return spec


def write_default_config(path: str | Path, **overrides: dict[str, str]) -> None:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    for section, values in overrides.items():
        for k, v in values.items():
            cp[section][k] = v
    with open(path, "w") as fh:
        fh.write("# tile360 experiment configuration; paths are relative to this file\n")
        cp.write(fh)
