"""Balanced pair of gated-mode APDs.

Click statistics follow a weak coherent (Poisson) input with dark events
independent of the signal: ``P = 1 - (1 - p_dark) * exp(-eta * mu)``.
The dark probability is per APD per gate.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .optics import PORT_A, PORT_B, TimeBinState, slot_probabilities

AFTERPULSE_SAFE_RATE_HZ = 1e6


@dataclass(frozen=True)
class ApdParams:
    quantum_efficiency: float = 0.10
    dark_prob_per_gate: float = 2.1e-7
    gate_width_ps: float = 750.0
    operating_temp_C: float = -108.0
    afterpulse_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise InvalidParameterError("quantum_efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_prob_per_gate < 1.0:
            raise InvalidParameterError("dark_prob_per_gate must lie in [0, 1)")
        if not 0.0 <= self.afterpulse_prob < 1.0:
            raise InvalidParameterError("afterpulse_prob must lie in [0, 1)")
        if not (math.isfinite(self.gate_width_ps) and self.gate_width_ps > 0):
            raise InvalidParameterError("gate_width_ps must be positive")


@dataclass(frozen=True)
class ClockParams:
    rep_rate_hz: float = 1e6
    target_slot: int | None = None  # None: middle slot of the output train

    def __post_init__(self):
        if not self.rep_rate_hz > 0:
            raise InvalidParameterError("rep_rate_hz must be positive")
        if self.target_slot is not None and self.target_slot < 0:
            raise InvalidParameterError("target_slot must be >= 0")

    def slot_for(self, n_slots: int) -> int:
        slot = n_slots // 2 if self.target_slot is None else self.target_slot
        if slot >= n_slots:
            raise InvalidParameterError(f"target_slot {slot} outside {n_slots} slots")
        return slot


def check_timing(apd: ApdParams, clock: ClockParams) -> None:
    """Warn when the gate rate is high enough for unmodelled afterpulsing to matter."""
    if clock.rep_rate_hz > AFTERPULSE_SAFE_RATE_HZ and apd.afterpulse_prob == 0:
        warnings.warn(
            f"rep_rate {clock.rep_rate_hz:g} Hz exceeds {AFTERPULSE_SAFE_RATE_HZ:g} Hz; "
            "afterpulsing is not modelled (afterpulse_prob=0)", stacklevel=2)


class ClickOutcome(enum.IntEnum):
    NONE = 0
    APD_A = 1
    APD_B = 2
    BOTH = 3


class DoubleClickPolicy(str, enum.Enum):
    DISCARD_BOTH = "discard_both"
    RANDOM_BOTH = "random_both"


def click_probability(mean_photons_at_apd, apd: ApdParams, after_click: bool = False):
    """Probability that the APD fires in one gate.

    Accepts scalars or arrays.  ``after_click`` adds the afterpulse hook for a
    gate that follows a click on the same APD.
    """
    mu = np.asarray(mean_photons_at_apd, dtype=float)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise InvalidParameterError("mean photon number must be finite and >= 0")
    noise = apd.dark_prob_per_gate
    if after_click:
        noise = 1.0 - (1.0 - noise) * (1.0 - apd.afterpulse_prob)
    # exact at mu = 0 and free of cancellation for small eta*mu
    p = noise + (1.0 - noise) * -np.expm1(-apd.quantum_efficiency * mu)
    return float(p) if p.ndim == 0 else p


def outcome_probabilities(p_a, p_b) -> np.ndarray:
    """Joint probabilities of (NONE, APD_A, APD_B, BOTH) for independent APDs."""
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    return np.stack([(1 - p_a) * (1 - p_b), p_a * (1 - p_b), (1 - p_a) * p_b, p_a * p_b], axis=-1)


def gated_detect(mu_a: float, mu_b: float, apd: ApdParams, rng,
                 apd_b: ApdParams | None = None) -> ClickOutcome:
    """Sample one gate of the balanced detector."""
    apd_b = apd if apd_b is None else apd_b
    fired_a = rng.random() < click_probability(mu_a, apd)
    fired_b = rng.random() < click_probability(mu_b, apd_b)
    return ClickOutcome(int(fired_a) + 2 * int(fired_b))


def gated_detect_many(mu_a, mu_b, apd: ApdParams, rng,
                      apd_b: ApdParams | None = None) -> np.ndarray:
    """Vectorized :func:`gated_detect`; returns an int array of ClickOutcome codes."""
    apd_b = apd if apd_b is None else apd_b
    mu_a, mu_b = np.broadcast_arrays(np.asarray(mu_a, float), np.asarray(mu_b, float))
    fired_a = rng.random(mu_a.shape) < click_probability(mu_a, apd)
    fired_b = rng.random(mu_b.shape) < click_probability(mu_b, apd_b)
    return fired_a.astype(np.int8) + 2 * fired_b.astype(np.int8)


def balanced_discriminate(outcome: ClickOutcome, policy=DoubleClickPolicy.DISCARD_BOTH,
                          rng=None) -> int | None:
    """Map a click outcome to a detector bit: APD A -> 0, APD B -> 1."""
    outcome = ClickOutcome(outcome)
    if outcome is ClickOutcome.APD_A:
        return 0
    if outcome is ClickOutcome.APD_B:
        return 1
    if outcome is ClickOutcome.BOTH:
        if DoubleClickPolicy(policy) is DoubleClickPolicy.RANDOM_BOTH:
            if rng is None:
                raise InvalidParameterError("random_both policy needs an rng")
            return int(rng.integers(2))
        return None
    return None


def discriminate_many(outcomes, policy, rng) -> np.ndarray:
    """Vectorized :func:`balanced_discriminate`; unresolved gates are -1."""
    outcomes = np.asarray(outcomes)
    bits = np.full(outcomes.shape, -1, dtype=np.int8)
    bits[outcomes == ClickOutcome.APD_A] = 0
    bits[outcomes == ClickOutcome.APD_B] = 1
    both = outcomes == ClickOutcome.BOTH
    if DoubleClickPolicy(policy) is DoubleClickPolicy.RANDOM_BOTH and np.any(both):
        bits[both] = rng.integers(2, size=int(both.sum()))
    return bits


def apd_inputs_from_state(state: TimeBinState, clock: ClockParams,
                          capture: float) -> tuple[float, float]:
    """Mean photon numbers reaching APD A and APD B inside the gate."""
    if not 0.0 <= capture <= 1.0:
        raise InvalidParameterError("capture fraction must lie in [0, 1]")
    slot = clock.slot_for(state.n_slots)
    probs = slot_probabilities(state)[slot]
    scale = state.mean_photons_total * capture
    return float(scale * probs[PORT_A]), float(scale * probs[PORT_B])
