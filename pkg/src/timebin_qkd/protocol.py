"""BB84 phase coding over the time-bin link: encoding, sifting, QBER."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .channel import arrival_time_sigma, fiber_transmit, window_capture_fraction
from .config import ScenarioConfig
from .detection import (ClickOutcome, apd_inputs_from_state, balanced_discriminate,
                        gated_detect)
from .errors import InvalidParameterError, UndefinedQberError
from .optics import apply_amz, source_pulse_pair
from .stats import wilson_interval


class Basis(enum.IntEnum):
    Z = 0
    X = 1


_ALICE_PHASES = {
    (0, Basis.Z): 0.0,
    (1, Basis.Z): math.pi,
    (0, Basis.X): math.pi / 2,
    (1, Basis.X): 3 * math.pi / 2,
}


def alice_encode(bit: int, basis) -> float:
    """Phase Alice applies to the late pulse of the pair."""
    try:
        return _ALICE_PHASES[(int(bit), Basis(basis))]
    except (KeyError, ValueError) as exc:
        raise InvalidParameterError(f"invalid bit/basis ({bit!r}, {basis!r})") from exc


def bob_basis_phase(basis) -> float:
    return 0.0 if Basis(basis) is Basis.Z else math.pi / 2


@dataclass(frozen=True)
class TrialRecord:
    gate_index: int
    alice_bit: int
    alice_basis: Basis
    bob_basis: Basis
    outcome: ClickOutcome
    inferred_bit: int | None

    @property
    def resolved(self) -> bool:
        return self.inferred_bit is not None


@dataclass(frozen=True)
class QberReport:
    """Sifted-key statistics.  ``qber`` is ``None`` when nothing was sifted."""
    sifted_count: int
    error_count: int
    qber: float | None
    ci_low: float | None
    ci_high: float | None
    raw_rate_per_gate: float | None = None
    sift_fraction: float | None = None

    @property
    def defined(self) -> bool:
        return self.qber is not None

    def require_qber(self) -> float:
        if self.qber is None:
            raise UndefinedQberError("no sifted bits; QBER is undefined")
        return self.qber


def capture_fraction(config: ScenarioConfig) -> float:
    sigma = arrival_time_sigma(config.fiber, config.source)
    return window_capture_fraction(sigma, config.apd.gate_width_ps)


def run_trial(config: ScenarioConfig, alice_bit: int, alice_basis, bob_basis, rng,
              drift_phase: float = 0.0, gate_index: int = 0) -> TrialRecord:
    """One gate of the full optical pipeline, composed from the component models."""
    alice = replace(config.alice,
                    phase_rad=config.alice.phase_rad + alice_encode(alice_bit, alice_basis))
    bob = config.bob_effective
    bob = replace(bob, phase_rad=bob.phase_rad + bob_basis_phase(bob_basis) + drift_phase)

    state = source_pulse_pair(config.source, alice)
    state = fiber_transmit(state, config.fiber)
    state = apply_amz(state, bob)
    mu_a, mu_b = apd_inputs_from_state(state, config.clock, capture_fraction(config))

    apd_a, apd_b = config.apd_pair
    outcome = gated_detect(mu_a, mu_b, apd_a, rng, apd_b)
    bit = balanced_discriminate(outcome, config.double_click_policy, rng)
    return TrialRecord(gate_index, int(alice_bit), Basis(alice_basis), Basis(bob_basis),
                       outcome, bit)


def sift(records: Iterable[TrialRecord]) -> list[TrialRecord]:
    """Keep resolved records whose bases match; bit values are never read."""
    return [r for r in records if r.alice_basis == r.bob_basis and r.inferred_bit is not None]


def estimate_qber(sifted: Sequence[TrialRecord], n_gates: int | None = None,
                  n_resolved: int | None = None) -> QberReport:
    n = len(sifted)
    errors = sum(1 for r in sifted if r.inferred_bit != r.alice_bit)
    raw_rate = None if not n_gates else (n_resolved if n_resolved is not None else n) / n_gates
    sift_fraction = n / n_resolved if n_resolved else None
    if n == 0:
        return QberReport(0, 0, None, None, None, raw_rate, sift_fraction)
    lo, hi = wilson_interval(errors, n)
    return QberReport(n, errors, errors / n, lo, hi, raw_rate, sift_fraction)


def qber_from_visibility(visibility: float) -> float:
    if not (math.isfinite(visibility) and 0.0 <= visibility <= 1.0):
        raise InvalidParameterError(f"visibility must lie in [0, 1], got {visibility!r}")
    return (1.0 - visibility) / 2.0
