"""Fiber link: loss, a polarization rotation shared by both time bins, and
dispersion broadening of the photon arrival time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf
from scipy.stats import unitary_group

from .errors import InvalidParameterError
from .optics import SourceParams, TimeBinState

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class FiberParams:
    """Fiber channel.

    ``pol_unitary`` is a 2x2 Jones matrix given as nested tuples of complex
    numbers; when ``None`` a Haar-random unitary is drawn from ``pol_seed``,
    or the identity is used if no seed is given either.
    """
    length_km: float = 150.0
    atten_dB_per_km: float = 0.22
    dispersion_ps_nm_km: float = 17.0
    dcf_enabled: bool = True
    pol_unitary: tuple | None = None
    pol_seed: int | None = None
    pol_drift_time_s: float = 1.0

    def __post_init__(self):
        for k in ("length_km", "atten_dB_per_km", "dispersion_ps_nm_km", "pol_drift_time_s"):
            if not math.isfinite(getattr(self, k)):
                raise InvalidParameterError(f"{k} must be finite")
        if self.length_km < 0:
            raise InvalidParameterError("length_km must be >= 0")
        if self.atten_dB_per_km < 0:
            raise InvalidParameterError("atten_dB_per_km must be >= 0")
        if self.pol_unitary is not None:
            u = np.asarray(self.pol_unitary, dtype=complex)
            if u.shape != (2, 2):
                raise InvalidParameterError("pol_unitary must be 2x2")
            if not np.allclose(u.conj().T @ u, np.eye(2), rtol=0, atol=UNITARY_TOL):
                raise InvalidParameterError("pol_unitary is not unitary")
            object.__setattr__(self, "pol_unitary",
                               tuple(tuple(complex(x) for x in row) for row in u))

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.atten_dB_per_km * self.length_km / 10.0)

    def jones(self) -> np.ndarray:
        if self.pol_unitary is not None:
            return np.array(self.pol_unitary, dtype=complex)
        if self.pol_seed is not None:
            return random_unitary(np.random.default_rng(self.pol_seed))
        return np.eye(2, dtype=complex)


def random_unitary(rng) -> np.ndarray:
    """Haar-random 2x2 unitary."""
    return unitary_group.rvs(2, random_state=rng)


def unitary_as_tuple(u) -> tuple:
    return tuple(tuple(complex(x) for x in row) for row in np.asarray(u))


def fiber_transmit(state: TimeBinState, fiber: FiberParams) -> TimeBinState:
    """Attenuate the state and apply the same Jones matrix to every slot and port."""
    u = fiber.jones()
    amps = np.einsum("ij,spj->spi", u, state.amplitudes)
    return state.with_amplitudes(amps, state.mean_photons_total * fiber.transmission)


def arrival_time_sigma(fiber: FiberParams, src: SourceParams) -> float:
    """RMS arrival-time spread in ps after the link."""
    sigma_in = src.pulse_fwhm_ps / FWHM_PER_SIGMA
    d_eff = 0.0 if fiber.dcf_enabled else fiber.dispersion_ps_nm_km
    spread = d_eff * fiber.length_km * src.spectral_width_nm
    return math.hypot(sigma_in, spread)


def window_capture_fraction(sigma_ps: float, gate_width_ps: float) -> float:
    """Fraction of a centred Gaussian arrival distribution inside the gate."""
    if sigma_ps < 0 or not gate_width_ps > 0:
        raise InvalidParameterError("need sigma_ps >= 0 and gate_width_ps > 0")
    if sigma_ps == 0:
        return 1.0
    return float(erf(gate_width_ps / (2.0 * math.sqrt(2.0) * sigma_ps)))
