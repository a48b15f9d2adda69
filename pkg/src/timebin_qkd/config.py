"""Scenario configuration and its JSON representation.

An empty JSON object parses to the reference setup: mu = 0.2, 0.22 dB/km,
eta = 0.1, p_dark = 2.1e-7 per gate, 750 ps gate, 1 MHz, 5 ns delay,
lambda = 1.55 um, n = 1.5, kappa = 5 um/C, dn/n = 0.01, 2 dB Bob loss and
150 km of fiber.

Complex numbers (the fiber Jones matrix) are written as ``[re, im]`` pairs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields

from .channel import FiberParams
from .detection import ApdParams, ClockParams, DoubleClickPolicy
from .errors import ConfigError, InvalidParameterError
from .optics import AmzParams, SourceParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DriftParams:
    """Bob's phase drift: Gaussian per-gate jitter plus an exponential
    settling transient after every temperature step."""
    phase_jitter_sigma_rad: float = 0.0
    settle_drift_rad: float = 0.0
    settle_tau_gates: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{f.name} must be finite and >= 0")
        if self.settle_drift_rad > 0 and self.settle_tau_gates <= 0:
            raise InvalidParameterError("settle_tau_gates must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate the link end to end.

    ``apd_b`` describes the second APD; ``None`` means it is identical to
    ``apd``.  ``modulator_loss_dB`` is extra loss on Bob's side from a
    BB84 phase modulator.
    """
    source: SourceParams = field(default_factory=SourceParams)
    alice: AmzParams = field(default_factory=AmzParams)
    bob: AmzParams = field(default_factory=AmzParams)
    fiber: FiberParams = field(default_factory=FiberParams)
    apd: ApdParams = field(default_factory=ApdParams)
    apd_b: ApdParams | None = None
    clock: ClockParams = field(default_factory=ClockParams)
    drift: DriftParams = field(default_factory=DriftParams)
    double_click_policy: str = DoubleClickPolicy.DISCARD_BOTH.value
    modulator_loss_dB: float = 0.0
    n_gates: int = 1_000_000
    master_seed: int = 0

    def __post_init__(self):
        if self.n_gates < 1:
            raise InvalidParameterError("n_gates must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise InvalidParameterError("master_seed must be an unsigned 64-bit integer")
        if self.modulator_loss_dB < 0:
            raise InvalidParameterError("modulator_loss_dB must be >= 0")
        DoubleClickPolicy(self.double_click_policy)

    @property
    def apd_pair(self) -> tuple[ApdParams, ApdParams]:
        return self.apd, self.apd if self.apd_b is None else self.apd_b

    @property
    def bob_effective(self) -> AmzParams:
        """Bob's AMZ with the phase-modulator loss folded into its insertion loss."""
        if self.modulator_loss_dB == 0:
            return self.bob
        return dataclasses.replace(
            self.bob, insertion_loss_dB=self.bob.insertion_loss_dB + self.modulator_loss_dB)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "source": SourceParams,
    "alice": AmzParams,
    "bob": AmzParams,
    "fiber": FiberParams,
    "apd": ApdParams,
    "apd_b": ApdParams,
    "clock": ClockParams,
    "drift": DriftParams,
}


def _encode(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return [_encode(v) for v in value]
    return value


def config_to_dict(config: ScenarioConfig) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    for f in fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = {g.name: _encode(getattr(value, g.name)) for g in fields(value)}
        else:
            out[f.name] = value
    return out


def render_config(config: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=False) + "\n"


def _decode_unitary(raw, where):
    try:
        return tuple(tuple(complex(x[0], x[1]) for x in row) for row in raw)
    except (TypeError, IndexError, ValueError) as exc:
        raise ConfigError(f"{where}: expected 2x2 list of [re, im] pairs") from exc


def _build_section(name, cls, raw):
    if raw is None and name == "apd_b":
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown field")
    kwargs = dict(raw)
    if cls is FiberParams and kwargs.get("pol_unitary") is not None:
        kwargs["pol_unitary"] = _decode_unitary(kwargs["pol_unitary"], f"{name}.pol_unitary")
    try:
        return cls(**kwargs)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected an object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported value {version!r}")
    known = {f.name for f in fields(ScenarioConfig)} | {"schema_version"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    kwargs = {}
    for key, value in raw.items():
        if key == "schema_version":
            continue
        if key in _SECTIONS:
            kwargs[key] = _build_section(key, _SECTIONS[key], value)
        else:
            kwargs[key] = value
    try:
        return ScenarioConfig(**kwargs)
    except (InvalidParameterError, ValueError, TypeError) as exc:
        raise ConfigError(f"top level: {exc}") from exc


def parse_config(text: str) -> ScenarioConfig:
    """Parse JSON text; errors carry the line/column or the offending field."""
    if not text.strip():
        return ScenarioConfig()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
