"""Flat, typed experiment configuration: a TOML file plus command-line overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("qfi-sweep", "populations", "estimate", "oracle", "bound-check")
OUTPUT_ENV = "CHAINQFI_OUTPUT_DIR"
EXTENDED_N = 10


def _default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "chainqfi-output")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of every subcommand; fields irrelevant to a mode are ignored.

    Energies (``coupling``, ``lambda_*``, ``epsilon``, amplitudes) share one
    unit and times are in its inverse, so with ``coupling = 1`` everything is
    measured in J and 1/J.
    """

    mode: str = "qfi-sweep"
    chain_length: int = 5
    coupling: float = 1.0
    time: float = 13.5
    time_grid: tuple[float, ...] | None = None
    slots: int = 20
    lambda_true: float = 0.0
    lambda_init: float = 0.1
    epsilon: float = 0.01
    restarts: int = 20
    seed: int = 0
    runs: int = 1
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    init_low: float = -1.0
    init_high: float = 1.0
    amplitude_bound: float | None = None
    warm_restarts: int = 5
    max_rounds: int = 50
    subsample_stop: bool = False
    arm: str = "both"
    workers: int = 1
    samples_per_slot: int = 10
    uncontrolled: bool = False
    pulse_file: str | None = None
    theta: float | None = None
    phi: float | None = None
    bound_samples: int = 100
    c_strong: float = 200.0
    oracle_lambdas: tuple[float, ...] = (0.0, 0.3, 0.9)
    extended: bool = False
    output_dir: str = field(default_factory=_default_output_dir)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.chain_length < 2:
            raise ConfigurationError("chain_length must be >= 2")
        if not self.coupling > 0:
            raise ConfigurationError("coupling must be positive")
        if not self.time > 0:
            raise ConfigurationError("time must be positive")
        if self.time_grid is not None:
            if not self.time_grid:
                raise ConfigurationError("time_grid is empty")
            if any(not t > 0 for t in self.time_grid):
                raise ConfigurationError("time_grid entries must be positive")
        for name in ("slots", "restarts", "runs", "warm_restarts", "max_rounds", "workers",
                     "samples_per_slot", "bound_samples"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.arm not in ("both", "control", "free"):
            raise ConfigurationError(f"arm must be both, control or free, got {self.arm!r}")
        if self.mode == "qfi-sweep" and self.chain_length >= EXTENDED_N and not self.extended:
            raise ConfigurationError(
                f"sweeps with chain_length >= {EXTENDED_N} are long-running; pass --extended to run them")

    @property
    def times(self) -> tuple[float, ...]:
        return self.time_grid if self.time_grid is not None else (self.time,)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_TUPLES = {"time_grid", "oracle_lambdas"}


def parse_grid(text: str) -> tuple[float, ...]:
    """``"2,4,8"`` or ``"start:stop:step"`` (stop inclusive) to a tuple of floats."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError as exc:
            raise ConfigurationError(f"bad grid {text!r}") from exc
        if step <= 0 or stop < start:
            raise ConfigurationError(f"bad grid {text!r}")
        n = int(round((stop - start) / step))
        return tuple(round(start + i * step, 12) for i in range(n + 1))
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad grid {text!r}") from exc


def load_file(path: str | os.PathLike) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge file values and overrides (overrides win) into a validated config."""
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _FIELDS:
                raise ConfigurationError(f"unknown config key {key!r}")
            if key in _TUPLES:
                value = parse_grid(value) if isinstance(value, str) else tuple(float(v) for v in value)
            merged[key] = value
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
