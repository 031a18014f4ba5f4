"""Training configuration and its ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .autodiff import DEFAULT_LEARNING_RATE
from .errors import ConfigError

DEFAULT_TAPS = {
    "downscale": ("conv1_1", "conv2_1", "conv3_1"),
    "decolorize": ("conv4_1",),
    "tonemap": ("conv1_1", "conv2_1", "conv3_1"),
}
GAMMA_RANGE = (0.2, 1.0)  # open below, closed above


@dataclass
class TaskConfig:
    taps: tuple | None = None  # None -> per-task default
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = 16
    epochs: int = 10
    iterations: int = 0  # > 0 overrides epochs with an exact step count (offline)
    train_size: int = 256
    alpha: float = 0.5
    gamma: float = 0.5
    eps_log: float = 1e-6
    tonemap_steps: int = 200
    hidden: int = 32
    depth: int = 2
    seed: int = 0
    threads: int = 0
    corpus: str | None = None
    output: str | None = None
    lossnet: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if isinstance(self.taps, str):
            self.taps = _parse_taps(self.taps)
        if self.taps is not None:
            self.taps = tuple(self.taps)
            if not self.taps:
                raise ConfigError("taps must name at least one loss-network layer")
        checks = [
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.iterations >= 0, "iterations must be >= 0"),
            (self.train_size >= 4, "train_size must be >= 4"),
            (self.alpha > 0, "alpha must be > 0"),
            (GAMMA_RANGE[0] < self.gamma <= GAMMA_RANGE[1],
             f"gamma = {self.gamma} out of range; admissible ({GAMMA_RANGE[0]}, {GAMMA_RANGE[1]}]"),
            (self.eps_log > 0, "eps_log must be > 0"),
            (self.tonemap_steps >= 0, "tonemap_steps must be >= 0"),
            (self.hidden >= 1, "hidden must be >= 1"),
            (self.depth >= 1, "depth must be >= 1"),
            (self.threads >= 0, "threads must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def taps_for(self, task):
        return self.taps if self.taps is not None else DEFAULT_TAPS[task]

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["taps"] is not None:
            d["taps"] = list(d["taps"])
        return d


def _parse_taps(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _coerce(name, raw: str):
    kind = {f.name: f.type for f in fields(TaskConfig)}[name]
    if name == "taps":
        return _parse_taps(raw)
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None
    return raw.strip().strip('"').strip("'") or None


def parse_config(text: str, source="<config>") -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into raw overrides."""
    known = {f.name for f in fields(TaskConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides=None) -> TaskConfig:
    """Defaults <- config file <- overrides (e.g. command-line flags)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        values.update(parse_config(text, str(path)))
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in {f.name for f in fields(TaskConfig)}:
                raise ConfigError(f"unknown key {k!r}")
            values[k] = v
    return TaskConfig(**values)


def dump_config(config: TaskConfig) -> str:
    lines = []
    for k, v in config.to_dict().items():
        if v is None:
            continue
        if isinstance(v, list):
            v = ",".join(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
