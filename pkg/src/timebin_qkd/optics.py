"""Faint-pulse source and asymmetric Mach-Zehnder interferometer (AMZ) transfer.

A :class:`TimeBinState` stores complex amplitudes indexed by
``[slot, port, polarization]``.  Amplitudes carry the shape of the signal and
``mean_photons_total`` carries its intensity, so the mean photon number in a
slot is ``mean_photons_total * sum_pol |amplitude|**2``.

Conventions
-----------
* Couplers are unitary with the cross-coupled term carrying a +90 degree
  phase: ``[[sqrt(s), 1j*sqrt(1-s)], [1j*sqrt(1-s), sqrt(s)]]`` where ``s``
  is the power fraction kept in the bar path.
* Arm 0 is the short arm, arm 1 the long (delayed) arm.
* Output ports are labelled so that a balanced, zero-delay interferometer
  maps port A to port A ("through" labelling).  For two cascaded 50/50 AMZs
  the middle slot then carries ``(1 + cos(phi_A - phi_B)) / 4`` on port A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, InvalidParameterError

PORT_A, PORT_B = 0, 1
POL_H, POL_V = 0, 1
MAX_SLOTS = 8
NORM_EPS = 1e-12

# 5 ns in silica (group index ~1.5) is ~1 m of path difference; this is the
# nearest multiple of the default beat length 1.55 um / 0.015.
_DEFAULT_BEAT_MULTIPLE = 9671
DEFAULT_PATH_DIFF_UM = _DEFAULT_BEAT_MULTIPLE * 1.55 / 0.015


def db_to_power(loss_db: float) -> float:
    """Power transmission of a loss given in dB."""
    return 10.0 ** (-loss_db / 10.0)


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidParameterError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True, eq=False)
class TimeBinState:
    amplitudes: np.ndarray
    slot_duration_ns: float = 5.0
    mean_photons_total: float = 1.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 3 or amps.shape[1:] != (2, 2) or amps.shape[0] < 1:
            raise InvalidParameterError(
                f"amplitudes must have shape (slots, 2, 2), got {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise InvalidParameterError("amplitudes must be finite")
        norm = float(np.sum(np.abs(amps) ** 2))
        if norm > 1.0 + NORM_EPS:
            raise InvalidParameterError(f"total probability {norm} exceeds 1")
        if not self.slot_duration_ns > 0:
            raise InvalidParameterError("slot_duration_ns must be positive")
        if not (math.isfinite(self.mean_photons_total) and self.mean_photons_total >= 0):
            raise InvalidParameterError("mean_photons_total must be finite and >= 0")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_slots(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def with_amplitudes(self, amplitudes, mean_photons_total=None) -> "TimeBinState":
        mu = self.mean_photons_total if mean_photons_total is None else mean_photons_total
        return TimeBinState(amplitudes, self.slot_duration_ns, mu)

    @classmethod
    def single_pulse(cls, pol=(1.0, 0.0), port=PORT_A, mean_photons=1.0,
                     slot_duration_ns=5.0) -> "TimeBinState":
        """One normalized pulse in slot 0 with the given Jones vector."""
        jones = np.asarray(pol, dtype=complex)
        jones = jones / np.linalg.norm(jones)
        amps = np.zeros((1, 2, 2), dtype=complex)
        amps[0, port] = jones
        return cls(amps, slot_duration_ns, mean_photons)


@dataclass(frozen=True)
class AmzParams:
    """Geometry and optics of one planar-lightwave-circuit AMZ.

    ``coupler_in_split``/``coupler_out_split`` are bar-path power fractions;
    ``None`` on the input coupler selects the value that equalizes the two
    arm amplitudes at the output coupler (compensating arm-loss imbalance).
    """
    delay_slots: int = 1
    delay_ns: float = 5.0
    phase_rad: float = 0.0
    temperature_C: float = 25.0
    temp_coeff_um_per_C: float = 5.0
    wavelength_um: float = 1.55
    refractive_index: float = 1.5
    modal_birefringence: float = 0.015
    path_length_diff_um: float = DEFAULT_PATH_DIFF_UM
    coupler_in_split: float | None = None
    coupler_out_split: float | None = 0.5
    arm_loss_short_dB: float = 0.0
    arm_loss_long_dB: float = 0.0
    insertion_loss_dB: float = 2.0
    pdl_dB: float = 0.0

    def __post_init__(self):
        floats = {k: v for k, v in self.__dict__.items()
                  if isinstance(v, float) and k != "coupler_in_split"}
        for k, v in floats.items():
            _check_finite(k, v)
        if int(self.delay_slots) != self.delay_slots or self.delay_slots < 0:
            raise InvalidParameterError("delay_slots must be a non-negative integer")
        if self.delay_ns < 0:
            raise InvalidParameterError("delay_ns must be >= 0")
        for k in ("coupler_in_split", "coupler_out_split"):
            s = getattr(self, k)
            if s is not None and not (math.isfinite(s) and 0.0 <= s <= 1.0):
                raise InvalidParameterError(f"{k} must lie in [0, 1], got {s}")
        for k in ("arm_loss_short_dB", "arm_loss_long_dB", "insertion_loss_dB", "pdl_dB"):
            if getattr(self, k) < 0:
                raise InvalidParameterError(f"{k} must be >= 0")
        for k in ("wavelength_um", "refractive_index", "path_length_diff_um"):
            if not getattr(self, k) > 0:
                raise InvalidParameterError(f"{k} must be positive")
        if self.modal_birefringence < 0:
            raise InvalidParameterError("modal_birefringence must be >= 0")

    @property
    def beat_length_um(self) -> float:
        if self.modal_birefringence == 0:
            return math.inf
        return self.wavelength_um / self.modal_birefringence

    @property
    def input_split(self) -> float:
        if self.coupler_in_split is not None:
            return self.coupler_in_split
        t_short = db_to_power(self.arm_loss_short_dB)
        t_long = db_to_power(self.arm_loss_long_dB)
        return t_long / (t_short + t_long)

    @property
    def output_split(self) -> float:
        return 0.5 if self.coupler_out_split is None else self.coupler_out_split


@dataclass(frozen=True)
class SourceParams:
    wavelength_um: float = 1.55
    pulse_fwhm_ps: float = 200.0
    spectral_width_nm: float = 0.5
    mean_photons_mu: float = 0.2
    input_pol: str = "H"

    def __post_init__(self):
        for k in ("wavelength_um", "pulse_fwhm_ps", "spectral_width_nm", "mean_photons_mu"):
            _check_finite(k, getattr(self, k))
        if not self.pulse_fwhm_ps > 0:
            raise InvalidParameterError("pulse_fwhm_ps must be positive")
        if self.mean_photons_mu < 0:
            raise InvalidParameterError("mean_photons_mu must be >= 0")
        if self.spectral_width_nm < 0:
            raise InvalidParameterError("spectral_width_nm must be >= 0")
        if self.input_pol not in ("H", "V"):
            raise InvalidParameterError("input_pol must be 'H' or 'V'")


def coupler_matrix(split: float) -> np.ndarray:
    """2x2 unitary coupler; cross terms carry +90 degrees."""
    t = math.sqrt(split)
    r = math.sqrt(1.0 - split)
    return np.array([[t, 1j * r], [1j * r, t]], dtype=complex)


def source_pulse_pair(src: SourceParams, alice: AmzParams) -> TimeBinState:
    """Double pulse leaving Alice's AMZ, normalized to ``src.mean_photons_mu``.

    The attenuator sets mu at Alice's output, so Alice's internal losses are
    absorbed into it and not applied here.
    """
    _check_finite("phase_rad", alice.phase_rad)
    if alice.delay_slots < 1:
        raise InvalidParameterError("alice.delay_slots must be >= 1")
    n_slots = alice.delay_slots + 1
    if n_slots > MAX_SLOTS:
        raise CapacityError(f"{n_slots} slots exceeds MAX_SLOTS={MAX_SLOTS}")
    pol = POL_H if src.input_pol == "H" else POL_V
    amps = np.zeros((n_slots, 2, 2), dtype=complex)
    amps[0, PORT_A, pol] = 1 / math.sqrt(2)
    amps[alice.delay_slots, PORT_A, pol] = np.exp(1j * alice.phase_rad) / math.sqrt(2)
    slot_ns = alice.delay_ns / alice.delay_slots
    return TimeBinState(amps, slot_ns, src.mean_photons_mu)


def birefringence_imbalance(params: AmzParams) -> float:
    """Relative H/V phase accumulated over the arm length difference, in (-pi, pi]."""
    if params.modal_birefringence == 0:
        return 0.0
    cycles = params.path_length_diff_um * params.modal_birefringence / params.wavelength_um
    frac = cycles - round(cycles)
    if frac <= -0.5:
        frac += 1.0
    return 2 * math.pi * frac


def is_balanced(params: AmzParams, tolerance_rad: float = 1e-6) -> bool:
    return abs(birefringence_imbalance(params)) <= tolerance_rad


def phase_from_temperature(params: AmzParams, delta_T: float) -> float:
    """Phase added to the long arm by a temperature change ``delta_T`` (deg C)."""
    return (2 * math.pi * params.refractive_index * params.temp_coeff_um_per_C
            * delta_T / params.wavelength_um)


def fringe_period_C(params: AmzParams) -> float:
    """Temperature change producing one full 2*pi fringe: lambda / (n * kappa)."""
    return params.wavelength_um / (params.refractive_index * params.temp_coeff_um_per_C)


def at_temperature(params: AmzParams, temperature_C: float) -> AmzParams:
    """Copy of ``params`` retuned to a new device temperature.

    Both the interferometer phase and the path-length difference (hence the
    birefringent phase) follow the temperature change.
    """
    dT = temperature_C - params.temperature_C
    return replace(
        params,
        temperature_C=temperature_C,
        phase_rad=params.phase_rad + phase_from_temperature(params, dT),
        path_length_diff_um=params.path_length_diff_um + params.temp_coeff_um_per_C * dT,
    )


def apply_amz(state: TimeBinState, params: AmzParams, max_slots: int = MAX_SLOTS) -> TimeBinState:
    """Propagate ``state`` through one AMZ.

    The output has ``state.n_slots + params.delay_slots`` slots.  Losses scale
    the total probability; ``mean_photons_total`` is left unchanged so that
    slot intensities stay ``mean_photons_total * probability``.
    """
    d = int(params.delay_slots)
    n_out = state.n_slots + d
    if n_out > max_slots:
        raise CapacityError(f"{n_out} output slots exceeds maximum {max_slots}")

    c_in = coupler_matrix(params.input_split)
    c_out = coupler_matrix(params.output_split)
    common = math.sqrt(db_to_power(params.insertion_loss_dB))
    pol_amp = np.array([1.0, math.sqrt(db_to_power(params.pdl_dB))])
    short = math.sqrt(db_to_power(params.arm_loss_short_dB)) * common * pol_amp
    phi_pol = birefringence_imbalance(params)
    long_ = (math.sqrt(db_to_power(params.arm_loss_long_dB)) * common * pol_amp
             * np.exp(1j * params.phase_rad) * np.array([1.0, np.exp(1j * phi_pol)]))

    # arms[slot, arm, pol]
    arms = np.einsum("ap,spk->sak", c_in, state.amplitudes)
    routed = np.zeros((n_out, 2, 2), dtype=complex)
    routed[: state.n_slots, 0] = arms[:, 0] * short
    routed[d: d + state.n_slots, 1] += arms[:, 1] * long_
    waveguides = np.einsum("wa,sak->swk", c_out, routed)
    out = waveguides[:, ::-1, :]
    return state.with_amplitudes(out)


def slot_probabilities(state: TimeBinState) -> np.ndarray:
    """Probability per ``[slot, port]`` summed over polarization."""
    return np.sum(np.abs(state.amplitudes) ** 2, axis=2)


def slot_mean_photons(state: TimeBinState) -> np.ndarray:
    return state.mean_photons_total * slot_probabilities(state)


def middle_fringe_visibility(state_early: TimeBinState, state_late: TimeBinState,
                             slot: int) -> np.ndarray:
    """Per-port fringe visibility of ``slot`` given the two pulse contributions.

    ``state_early``/``state_late`` are the outputs produced by the early and
    late input pulses alone; the visibility is ``|c1| / c0`` of the intensity
    ``c0 + Re(c1 exp(i psi))`` obtained by sweeping their relative phase.
    """
    e = state_early.amplitudes[slot]
    l_ = state_late.amplitudes[slot]
    c0 = np.sum(np.abs(e) ** 2 + np.abs(l_) ** 2, axis=1)
    c1 = 2 * np.abs(np.sum(np.conj(l_) * e, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c0 > 0, c1 / c0, 0.0)
