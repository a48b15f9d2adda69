"""Scenario runners: counting probability versus distance, temperature fringe
scans, visibility estimates, drift calibration and BB84 sessions.

Every Monte Carlo runner has a closed-form counterpart here
(:func:`analytic_click_probability`, :func:`analytic_visibility`,
:func:`analytic_bb84`) that the simulated statistics are checked against.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq, curve_fit

from .config import DriftParams, ScenarioConfig
from .detection import ClickOutcome, DoubleClickPolicy, click_probability, outcome_probabilities
from .errors import FringeFitError, InvalidParameterError
from .montecarlo import (LinkResponse, drift_phase, link_response, simulate_bb84,
                         simulate_counts, stream_rng)
from .optics import PORT_A, PORT_B, at_temperature, fringe_period_C
from .protocol import (Basis, QberReport, TrialRecord, estimate_qber, qber_from_visibility,
                       sift)
from .stats import wilson_interval

log = logging.getLogger(__name__)

_GH_X, _GH_W = hermegauss(64)
_GH_W = _GH_W / math.sqrt(2 * math.pi)
MIN_EXPECTED_COUNTS = 100


# --------------------------------------------------------------------------
# closed-form oracle

def _jitter_nodes(drift: DriftParams):
    if drift.phase_jitter_sigma_rad == 0:
        return np.zeros(1), np.ones(1)
    return drift.phase_jitter_sigma_rad * _GH_X, _GH_W


def _averaged_outcomes(config: ScenarioConfig, response: LinkResponse,
                       bob_phase, alice_phase=0.0, drift: DriftParams | None = None) -> np.ndarray:
    """Outcome probabilities ``[NONE, A, B, BOTH]`` averaged over Gaussian jitter."""
    drift = config.drift if drift is None else drift
    nodes, weights = _jitter_nodes(drift)
    bob_phase = np.asarray(bob_phase, dtype=float)[..., None] + nodes
    mu_a, mu_b = response.mean_photons(bob_phase, np.asarray(alice_phase, float)[..., None])
    apd_a, apd_b = config.apd_pair
    joint = outcome_probabilities(click_probability(mu_a, apd_a), click_probability(mu_b, apd_b))
    return np.tensordot(weights, np.moveaxis(joint, -2, 0), axes=1)


def analytic_click_probability(config: ScenarioConfig, delta_phi: float = 0.0,
                               response: LinkResponse | None = None,
                               include_drift: bool = True) -> tuple[float, float]:
    """Per-gate firing probabilities of APD A and APD B.

    ``delta_phi`` is an extra Alice-minus-Bob phase on top of the device
    phases in ``config``.  Gaussian phase jitter is averaged by Gauss-Hermite
    quadrature unless ``include_drift`` is false.
    """
    response = link_response(config) if response is None else response
    drift = config.drift if include_drift else DriftParams()
    p = _averaged_outcomes(config, response, -delta_phi, drift=drift)
    return float(p[1] + p[3]), float(p[2] + p[3])


def analytic_visibility(config: ScenarioConfig, response: LinkResponse | None = None,
                        include_drift: bool = True) -> tuple[float, float]:
    """Expected count-fringe visibility of APD A and APD B, dark counts included."""
    response = link_response(config) if response is None else response
    drift = config.drift if include_drift else DriftParams()
    out = []
    for port in (PORT_A, PORT_B):
        peak = response.peak_phase(port)
        p = _averaged_outcomes(config, response, np.array([peak, peak + math.pi]), drift=drift)
        fired = p[:, 1 + port] + p[:, 3]
        hi, lo = max(fired), min(fired)
        out.append(float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0)
    return out[0], out[1]


def visibility_ceiling(config: ScenarioConfig) -> tuple[float, float]:
    """Visibility limit set by the signal-to-dark ratio alone (no drift)."""
    return analytic_visibility(config, include_drift=False)


def washout_factor(sigma_rad: float) -> float:
    """Fringe contrast left by Gaussian phase jitter of standard deviation ``sigma_rad``."""
    return math.exp(-sigma_rad ** 2 / 2)


# --------------------------------------------------------------------------
# drift

def phase_drift_sample(drift: DriftParams, gate_index: int, gates_since_step, rng=None):
    """Phase drift for one gate (or an array of ``gates_since_step``).

    ``rng`` may be a Generator or an integer seed; with a seed the draw comes
    from the counter-based stream keyed by ``gate_index``.
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = stream_rng(int(rng or 0), "drift", int(gate_index))
    out = drift_phase(drift, gates_since_step, rng)
    return float(out) if np.ndim(out) == 0 else out


def calibrate_drift(config: ScenarioConfig, target_a: float = 0.82,
                    target_b: float | None = 0.84) -> ScenarioConfig:
    """Choose the jitter that brings APD A to ``target_a`` and, if requested,
    APD B's dark probability that brings it to ``target_b``.
    """
    response = link_response(config)
    ceiling_a = visibility_ceiling(config)[0]
    if not 0 < target_a < ceiling_a:
        raise InvalidParameterError(f"target_a must lie in (0, {ceiling_a:.4f})")

    def vis_a(sigma):
        c = config.replace(drift=replace(config.drift, phase_jitter_sigma_rad=sigma))
        return analytic_visibility(c, response)[0] - target_a

    sigma = brentq(vis_a, 0.0, math.pi, xtol=1e-12)
    config = config.replace(drift=replace(config.drift, phase_jitter_sigma_rad=sigma))
    if target_b is None:
        return config

    apd_b = config.apd_pair[1]

    def vis_b(dark):
        c = config.replace(apd_b=replace(apd_b, dark_prob_per_gate=dark))
        return analytic_visibility(c, response)[1] - target_b

    v_no_dark = vis_b(0.0) + target_b
    if not target_b < v_no_dark:
        raise InvalidParameterError(f"target_b must be below {v_no_dark:.4f}")
    dark = brentq(vis_b, 0.0, 0.5, xtol=1e-15, rtol=1e-12)
    return config.replace(apd_b=replace(apd_b, dark_prob_per_gate=dark))


def ideal_config(**overrides) -> ScenarioConfig:
    """Lossless devices, zero-length fiber, noiseless detectors and no drift."""
    base = ScenarioConfig()
    lossless = dict(insertion_loss_dB=0.0)
    config = base.replace(
        alice=replace(base.alice, **lossless),
        bob=replace(base.bob, **lossless),
        fiber=replace(base.fiber, length_km=0.0),
        apd=replace(base.apd, dark_prob_per_gate=0.0),
    )
    return config.replace(**overrides)


# --------------------------------------------------------------------------
# distance sweep

@dataclass(frozen=True)
class SweepRow:
    length_km: float
    p_analytic: float
    p_mc: float
    ci_low: float
    ci_high: float
    dark_floor: float
    counts: int
    gates: int


def run_distance_sweep(config: ScenarioConfig, distances_km: Sequence[float],
                       n_gates: int | None = None, workers: int = 1) -> list[SweepRow]:
    """APD A firing probability at the fringe peak for each fiber length."""
    n = config.n_gates if n_gates is None else n_gates
    if any(d < 0 for d in distances_km):
        raise InvalidParameterError("distances must be >= 0")
    rows = []
    for i, length in enumerate(distances_km):
        c = config.replace(fiber=replace(config.fiber, length_km=float(length)))
        response = link_response(c)
        peak = response.peak_phase(PORT_A)
        p_a, _ = analytic_click_probability(c, -peak, response)
        if i == len(distances_km) - 1 and p_a * n < MIN_EXPECTED_COUNTS:
            warnings.warn(f"only {p_a * n:.1f} expected counts at {length} km; "
                          f"increase n_gates", stacklevel=2)
        counts = simulate_counts(c, n, tag="sweep", point=i, bob_phase=peak,
                                 response=response, workers=workers)
        k = int(counts[ClickOutcome.APD_A] + counts[ClickOutcome.BOTH])
        lo, hi = wilson_interval(k, n)
        rows.append(SweepRow(float(length), p_a, k / n, lo, hi,
                             c.apd.dark_prob_per_gate, k, n))
    return rows


def fit_log_slope(lengths_km, p, dark, counts=None) -> tuple[float, float]:
    """Slope (per km) and its standard error of ``log10(p - dark)`` versus length.

    With ``counts`` the points are weighted by their Poisson precision.
    """
    x = np.asarray(lengths_km, float)
    excess = np.asarray(p, float) - np.asarray(dark, float)
    ok = excess > 0
    y = np.log10(excess[ok])
    x = x[ok]
    if counts is None:
        w = np.ones_like(x)
    else:
        # d log10(p) = dp / (p ln 10); Poisson dp/p = 1/sqrt(counts)
        c = np.asarray(counts, float)[ok]
        p_ok = np.asarray(p, float)[ok]
        rel = np.sqrt(np.maximum(c, 1)) / c.clip(min=1) * p_ok / excess[ok]
        w = 1.0 / (rel / math.log(10)) ** 2
    coef, cov = np.polyfit(x, y, 1, w=np.sqrt(w), cov="unscaled")
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


# --------------------------------------------------------------------------
# fringe scan

@dataclass(frozen=True)
class FringePoint:
    temperature_C: float
    phase_rad: float
    counts_a: int
    counts_b: int
    gates: int


@dataclass(frozen=True)
class FringeFit:
    """Least-squares fit of ``offset + amplitude*cos(2*pi*(x - x_ref)/period + phase)``
    to per-gate count rates, with ``x_ref`` the first scan point.
    ``status`` is ``"ok"`` or a failure reason."""
    status: str
    x_ref: float = math.nan
    offset: float = math.nan
    amplitude: float = math.nan
    phase: float = math.nan
    period: float = math.nan
    offset_err: float = math.nan
    amplitude_err: float = math.nan
    phase_err: float = math.nan
    period_err: float = math.nan
    visibility: float = math.nan
    visibility_err: float = math.nan
    raw_visibility: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class FringeResult:
    points: tuple[FringePoint, ...]
    fit_a: FringeFit
    fit_b: FringeFit
    nominal_period_C: float


def _sinusoid(x, offset, a, b, period):
    k = 2 * np.pi * x / period
    return offset + a * np.cos(k) + b * np.sin(k)


def _sinusoid_jac(x, offset, a, b, period):
    k = 2 * np.pi * x / period
    c, s = np.cos(k), np.sin(k)
    return np.column_stack([np.ones_like(k), c, s, (a * s - b * c) * k / period])


def fit_fringe(x, counts, gates, period_guess: float, fit_period: bool = True) -> FringeFit:
    """Fit a sinusoid to count rates with Poisson weights; never raises."""
    x = np.asarray(x, float)
    counts = np.asarray(counts, float)
    gates = np.asarray(gates, float)
    if len(x) < 5 or np.all(counts == 0) or np.ptp(x) == 0:
        return FringeFit(status="failed: degenerate data")
    rate = counts / gates
    raw = (rate.max() - rate.min()) / (rate.max() + rate.min())
    x0 = x - x.mean()

    # fit in units of the mean rate so all parameters are of order one
    unit = rate.mean()
    y = rate / unit
    k = 2 * np.pi * x0 / period_guess
    design = np.column_stack([np.ones_like(k), np.cos(k), np.sin(k)])
    p0, *_ = np.linalg.lstsq(design, y, rcond=None)
    if fit_period:
        model, jac, p0 = _sinusoid, _sinusoid_jac, [*p0, period_guess]
    else:
        def model(xx, o, a, b):
            return _sinusoid(xx, o, a, b, period_guess)

        def jac(xx, o, a, b):
            return _sinusoid_jac(xx, o, a, b, period_guess)[:, :3]
    try:
        sigma = np.sqrt(np.maximum(counts, 1.0)) / gates / unit
        for _ in range(3):
            popt, pcov = curve_fit(model, x0, y, p0=p0, sigma=sigma, absolute_sigma=True,
                                   jac=jac, maxfev=20000)
            expected = np.maximum(model(x0, *popt) * unit * gates, 1.0)
            sigma = np.sqrt(expected) / gates / unit
            p0 = popt
    except (RuntimeError, ValueError) as exc:
        return FringeFit(status=f"failed: {exc}", raw_visibility=float(raw))
    if not np.all(np.isfinite(pcov)):
        return FringeFit(status="failed: singular covariance", raw_visibility=float(raw))
    to_rate = np.array([unit, unit, unit, 1.0])[:len(popt)]
    popt = popt * to_rate
    pcov = pcov * np.outer(to_rate, to_rate)

    offset, a, b = popt[:3]
    period = popt[3] if fit_period else period_guess
    period_err = math.sqrt(pcov[3, 3]) if fit_period else 0.0
    amp = math.hypot(a, b)
    if amp == 0 or offset <= 0:
        return FringeFit(status="failed: non-physical fit", raw_visibility=float(raw))
    cov = pcov[:3, :3]
    g_amp = np.array([0.0, a / amp, b / amp])
    g_phase = np.array([0.0, b / amp ** 2, -a / amp ** 2])
    g_vis = np.array([-amp / offset ** 2, a / (amp * offset), b / (amp * offset)])
    phase = math.atan2(-b, a) + 2 * math.pi * (x.mean() - x[0]) / period
    phase = (phase + math.pi) % (2 * math.pi) - math.pi
    return FringeFit(
        status="ok",
        x_ref=float(x[0]),
        offset=float(offset),
        amplitude=float(amp),
        phase=float(phase),
        period=float(period),
        offset_err=float(math.sqrt(cov[0, 0])),
        amplitude_err=float(math.sqrt(g_amp @ cov @ g_amp)),
        phase_err=float(math.sqrt(g_phase @ cov @ g_phase)),
        period_err=float(period_err),
        visibility=float(amp / offset),
        visibility_err=float(math.sqrt(g_vis @ cov @ g_vis)),
        raw_visibility=float(raw),
    )


def run_fringe_scan(config: ScenarioConfig, temperatures_C: Sequence[float],
                    n_gates: int | None = None, workers: int = 1,
                    fit_period: bool = True) -> FringeResult:
    """Step Bob's device temperature and accumulate counts on both APDs.

    ``n_gates`` is per temperature point.  Each point starts a new settling
    transient of the drift model.
    """
    n = config.n_gates if n_gates is None else n_gates
    bob0 = config.bob_effective
    period = fringe_period_C(bob0)
    temps = [float(t) for t in temperatures_C]
    if len(temps) > 1 and max(temps) - min(temps) < period:
        warnings.warn(f"temperature span {max(temps) - min(temps):.4f} C is shorter than "
                      f"one fringe period ({period:.4f} C)", stacklevel=2)
    points = []
    for i, t in enumerate(temps):
        bob = at_temperature(bob0, t)
        response = link_response(config, bob=bob)
        counts = simulate_counts(config, n, tag="fringe", point=i, response=response,
                                 workers=workers)
        points.append(FringePoint(
            t, bob.phase_rad,
            int(counts[ClickOutcome.APD_A] + counts[ClickOutcome.BOTH]),
            int(counts[ClickOutcome.APD_B] + counts[ClickOutcome.BOTH]),
            n))
    x = [p.temperature_C for p in points]
    g = [p.gates for p in points]
    fit_a = fit_fringe(x, [p.counts_a for p in points], g, period, fit_period)
    fit_b = fit_fringe(x, [p.counts_b for p in points], g, period, fit_period)
    for name, fit in (("A", fit_a), ("B", fit_b)):
        if not fit.ok:
            log.warning("fringe fit for APD %s %s", name, fit.status)
    return FringeResult(tuple(points), fit_a, fit_b, period)


@dataclass(frozen=True)
class VisibilityEstimate:
    value: float
    stderr: float
    clamped: bool
    raw: float


def estimate_visibility(fringe: FringeResult) -> tuple[VisibilityEstimate, VisibilityEstimate]:
    """Visibility ``amplitude / offset`` of each APD's fitted fringe, clamped to [0, 1]."""
    out = []
    for name, fit in (("A", fringe.fit_a), ("B", fringe.fit_b)):
        if not fit.ok:
            raise FringeFitError(f"APD {name}: {fit.status}")
        if not fit.offset > 0:
            raise FringeFitError(f"APD {name}: fitted offset {fit.offset} <= 0")
        v = fit.visibility
        clamped = not 0.0 <= v <= 1.0
        out.append(VisibilityEstimate(min(max(v, 0.0), 1.0), fit.visibility_err, clamped,
                                      fit.raw_visibility))
    return out[0], out[1]


# --------------------------------------------------------------------------
# BB84

@dataclass(frozen=True)
class Bb84Session:
    report: QberReport
    alice_key: np.ndarray
    bob_key: np.ndarray
    n_gates: int
    n_clicks: int
    n_resolved: int
    analytic_raw_rate: float
    analytic_qber: float | None
    analytic_visibility: tuple[float, float]
    qber_from_visibility: float
    records: tuple[TrialRecord, ...] = field(repr=False, default=())


def analytic_bb84(config: ScenarioConfig,
                  response: LinkResponse | None = None) -> tuple[float, float | None]:
    """Expected resolved-click rate per gate and sifted QBER."""
    response = link_response(config) if response is None else response
    random_both = DoubleClickPolicy(config.double_click_policy) is DoubleClickPolicy.RANDOM_BOTH
    resolved = 0.0
    sifted = 0.0
    wrong = 0.0
    for bit in (0, 1):
        for a_basis in (0, 1):
            alice_phase = math.pi * bit + math.pi / 2 * a_basis
            for b_basis in (0, 1):
                p = _averaged_outcomes(config, response, math.pi / 2 * b_basis, alice_phase)
                both = p[ClickOutcome.BOTH] if random_both else 0.0
                r = p[ClickOutcome.APD_A] + p[ClickOutcome.APD_B] + both
                resolved += r / 8
                if a_basis == b_basis:
                    bad = p[ClickOutcome.APD_B] if bit == 0 else p[ClickOutcome.APD_A]
                    sifted += r / 8
                    wrong += (bad + both / 2) / 8
    return float(resolved), (float(wrong / sifted) if sifted > 0 else None)


def run_bb84_session(config: ScenarioConfig, n_gates: int | None = None,
                     workers: int = 1, keep_records: bool = False) -> Bb84Session:
    """Random bits and bases every gate through the full link, then sift.

    A report with ``qber=None`` signals that no bits survived sifting.
    """
    n = config.n_gates if n_gates is None else n_gates
    response = link_response(config)
    arr = simulate_bb84(config, n, workers=workers)
    records = [
        TrialRecord(int(g), int(ab), Basis(int(ak)), Basis(int(bk)), ClickOutcome(int(o)),
                    None if ib < 0 else int(ib))
        for g, ab, ak, bk, o, ib in zip(arr["gate_index"], arr["alice_bit"], arr["alice_basis"],
                                        arr["bob_basis"], arr["outcome"], arr["inferred_bit"])
    ]
    n_resolved = sum(r.resolved for r in records)
    kept = sift(records)
    report = estimate_qber(kept, n_gates=n, n_resolved=n_resolved)
    vis = analytic_visibility(config, response)
    raw_rate, qber = analytic_bb84(config, response)
    return Bb84Session(
        report=report,
        alice_key=np.array([r.alice_bit for r in kept], dtype=np.uint8),
        bob_key=np.array([r.inferred_bit for r in kept], dtype=np.uint8),
        n_gates=n,
        n_clicks=len(records),
        n_resolved=n_resolved,
        analytic_raw_rate=raw_rate,
        analytic_qber=qber,
        analytic_visibility=vis,
        qber_from_visibility=qber_from_visibility(min(1.0, max(0.0, sum(vis) / 2))),
        records=tuple(records) if keep_records else (),
    )
