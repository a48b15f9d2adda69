"""Gate-level Monte Carlo engine.

Gates are grouped into fixed-size blocks.  Every block draws from its own
Philox stream keyed by ``(master_seed, tag, point, block)``, so results do
not depend on how blocks are spread over workers, and block results are
combined by summation or concatenation in block order.

Within a block, clicks are sampled by thinning: a candidate set of gates is
drawn with the worst-case click probability ``p_max``, then each candidate
draws its own phase drift and is accepted into ``APD_A``, ``APD_B`` or
``BOTH`` with its exact conditional probability divided by ``p_max``.  This
has the same distribution as simulating every gate, at a cost proportional
to the number of clicks.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import fiber_transmit
from .config import DriftParams, ScenarioConfig
from .detection import ApdParams, ClickOutcome, click_probability, discriminate_many
from .errors import InvalidParameterError
from .optics import PORT_A, apply_amz, source_pulse_pair
from .protocol import capture_fraction

BLOCK_GATES = 1 << 24


def stream_rng(master_seed: int, tag: str, *keys: int) -> np.random.Generator:
    """Counter-based generator for one ``(tag, *keys)`` work unit."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(zlib.crc32(tag.encode()), *keys))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class LinkResponse:
    """Amplitudes reaching the gated slot, split by path.

    ``early_short`` etc. have shape ``(2 ports, 2 pols)``; an extra phase
    ``bob_phase`` on Bob's long arm and ``alice_phase`` on the late pulse give
    ``early_short + early_long*e^{i bob} + e^{i alice}(late_short + late_long*e^{i bob})``.
    ``scale`` converts probability to mean photon number inside the gate.
    """
    early_short: np.ndarray
    early_long: np.ndarray
    late_short: np.ndarray
    late_long: np.ndarray
    scale: float

    def amplitudes(self, bob_phase, alice_phase=0.0) -> np.ndarray:
        eb = np.exp(1j * np.asarray(bob_phase, dtype=float))[..., None, None]
        ea = np.exp(1j * np.asarray(alice_phase, dtype=float))[..., None, None]
        return (self.early_short + self.early_long * eb
                + ea * (self.late_short + self.late_long * eb))

    def mean_photons(self, bob_phase, alice_phase=0.0) -> tuple[np.ndarray, np.ndarray]:
        amps = self.amplitudes(bob_phase, alice_phase)
        probs = np.sum(np.abs(amps) ** 2, axis=-1)
        return self.scale * probs[..., 0], self.scale * probs[..., 1]

    def max_mean_photons(self) -> tuple[float, float]:
        """Upper bound on the per-port mean photon number over all phases."""
        bound = (np.abs(self.early_short) + np.abs(self.early_long)
                 + np.abs(self.late_short) + np.abs(self.late_long)) ** 2
        per_port = self.scale * np.sum(bound, axis=-1) * (1 + 1e-12)
        return float(per_port[0]), float(per_port[1])

    def fringe_terms(self, port: int = PORT_A) -> tuple[float, complex]:
        """``(c0, c1)`` with intensity ``c0 + Re(c1 e^{i bob_phase})`` at ``alice_phase=0``."""
        a = self.early_short[port] + self.late_short[port]
        b = self.early_long[port] + self.late_long[port]
        c0 = float(np.sum(np.abs(a) ** 2 + np.abs(b) ** 2))
        c1 = complex(2 * np.sum(np.conj(a) * b))
        return c0, c1

    def peak_phase(self, port: int = PORT_A) -> float:
        """Extra Bob phase that maximizes the signal on ``port``."""
        _, c1 = self.fringe_terms(port)
        return float(-np.angle(c1)) if abs(c1) > 0 else 0.0


def link_response(config: ScenarioConfig, bob=None) -> LinkResponse:
    bob = config.bob_effective if bob is None else bob
    pair = source_pulse_pair(config.source, config.alice)
    d = config.alice.delay_slots
    parts = {}
    for name, keep in (("early", 0), ("late", d)):
        amps = np.zeros_like(pair.amplitudes)
        amps[keep] = pair.amplitudes[keep]
        state = fiber_transmit(pair.with_amplitudes(amps), config.fiber)
        f0 = apply_amz(state, bob)
        fpi = apply_amz(state, replace(bob, phase_rad=bob.phase_rad + math.pi))
        slot = config.clock.slot_for(f0.n_slots)
        parts[name + "_short"] = (f0.amplitudes[slot] + fpi.amplitudes[slot]) / 2
        parts[name + "_long"] = (f0.amplitudes[slot] - fpi.amplitudes[slot]) / 2
        mu = state.mean_photons_total
    return LinkResponse(scale=mu * capture_fraction(config), **parts)


def drift_phase(drift: DriftParams, gates_since_step, rng=None) -> np.ndarray:
    """Gaussian jitter plus the exponential settling transient."""
    t = np.asarray(gates_since_step, dtype=float)
    phase = np.zeros(t.shape)
    if drift.settle_drift_rad > 0:
        phase = phase + drift.settle_drift_rad * np.exp(-t / drift.settle_tau_gates)
    if drift.phase_jitter_sigma_rad > 0:
        phase = phase + rng.normal(0.0, drift.phase_jitter_sigma_rad, size=t.shape)
    return phase


@dataclass(frozen=True)
class _Block:
    response: LinkResponse
    apd_a: ApdParams
    apd_b: ApdParams
    drift: DriftParams
    master_seed: int
    tag: str
    point: int
    index: int
    start: int
    length: int
    alice_phase: float
    bob_phase: float
    bb84: bool
    policy: str


def _p_max(response: LinkResponse, apd_a: ApdParams, apd_b: ApdParams) -> float:
    mu_a, mu_b = response.max_mean_photons()
    qa = click_probability(mu_a, apd_a)
    qb = click_probability(mu_b, apd_b)
    return min(1.0, 1.0 - (1.0 - qa) * (1.0 - qb))


def _candidates(block: _Block, rng):
    p_max = _p_max(block.response, block.apd_a, block.apd_b)
    k = int(rng.binomial(block.length, p_max)) if p_max > 0 else 0
    pos = np.sort(rng.choice(block.length, size=k, replace=False)) if k else np.zeros(0, np.int64)
    return p_max, block.start + pos


def _accept(block: _Block, rng, p_max, gates, bob_phase, alice_phase) -> np.ndarray:
    bob_phase = bob_phase + drift_phase(block.drift, gates, rng)
    mu_a, mu_b = block.response.mean_photons(bob_phase, alice_phase)
    qa = click_probability(mu_a, block.apd_a)
    qb = click_probability(mu_b, block.apd_b)
    u = rng.random(gates.shape) * p_max
    cut_a = qa * (1 - qb)
    cut_b = cut_a + (1 - qa) * qb
    cut_both = cut_b + qa * qb
    outcome = np.full(gates.shape, ClickOutcome.NONE, dtype=np.int8)
    outcome[u < cut_both] = ClickOutcome.BOTH
    outcome[u < cut_b] = ClickOutcome.APD_B
    outcome[u < cut_a] = ClickOutcome.APD_A
    return outcome


def _run_block(block: _Block):
    rng = stream_rng(block.master_seed, block.tag, block.point, block.index)
    p_max, gates = _candidates(block, rng)
    if not block.bb84:
        outcome = _accept(block, rng, p_max, gates, block.bob_phase, block.alice_phase)
        return np.bincount(outcome, minlength=4).astype(np.int64)

    alice_bit = rng.integers(2, size=gates.shape, dtype=np.int8)
    alice_basis = rng.integers(2, size=gates.shape, dtype=np.int8)
    bob_basis = rng.integers(2, size=gates.shape, dtype=np.int8)
    alice_phase = block.alice_phase + np.pi * alice_bit + np.pi / 2 * alice_basis
    bob_phase = block.bob_phase + np.pi / 2 * bob_basis
    outcome = _accept(block, rng, p_max, gates, bob_phase, alice_phase)
    bits = discriminate_many(outcome, block.policy, rng)
    keep = outcome != ClickOutcome.NONE
    return {
        "gate_index": gates[keep].astype(np.int64),
        "alice_bit": alice_bit[keep],
        "alice_basis": alice_basis[keep],
        "bob_basis": bob_basis[keep],
        "outcome": outcome[keep],
        "inferred_bit": bits[keep],
    }


def _blocks(config: ScenarioConfig, n_gates: int, tag: str, point: int, response,
            alice_phase: float, bob_phase: float, bb84: bool, drift=None):
    apd_a, apd_b = config.apd_pair
    if apd_a.afterpulse_prob or apd_b.afterpulse_prob:
        raise InvalidParameterError(
            "afterpulsing is only supported by the per-gate path (protocol.run_trial)")
    drift = config.drift if drift is None else drift
    n_blocks = -(-n_gates // BLOCK_GATES)
    for b in range(n_blocks):
        start = b * BLOCK_GATES
        yield _Block(response, apd_a, apd_b, drift, config.master_seed, tag, point, b,
                     start, min(BLOCK_GATES, n_gates - start), alice_phase, bob_phase,
                     bb84, config.double_click_policy)


def _map(blocks, workers: int):
    blocks = list(blocks)
    if workers <= 1 or len(blocks) <= 1:
        return [_run_block(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_block, blocks, chunksize=max(1, len(blocks) // (4 * workers))))


def simulate_counts(config: ScenarioConfig, n_gates: int, *, tag: str = "counts",
                    point: int = 0, bob_phase: float = 0.0, alice_phase: float = 0.0,
                    response: LinkResponse | None = None, drift: DriftParams | None = None,
                    workers: int = 1) -> np.ndarray:
    """Outcome counts ``[NONE, APD_A, APD_B, BOTH]`` over ``n_gates`` gates."""
    response = link_response(config) if response is None else response
    parts = _map(_blocks(config, n_gates, tag, point, response, alice_phase, bob_phase,
                         False, drift), workers)
    counts = np.sum(parts, axis=0)
    counts[ClickOutcome.NONE] = n_gates - counts[1:].sum()
    return counts


def simulate_bb84(config: ScenarioConfig, n_gates: int, *, tag: str = "bb84",
                  point: int = 0, workers: int = 1) -> dict[str, np.ndarray]:
    """Random bits and bases per gate; returns arrays for gates with a click."""
    response = link_response(config)
    parts = _map(_blocks(config, n_gates, tag, point, response, 0.0, 0.0, True), workers)
    keys = ("gate_index", "alice_bit", "alice_basis", "bob_basis", "outcome", "inferred_bit")
    return {k: np.concatenate([p[k] for p in parts]) if parts else np.zeros(0)
            for k in keys}
