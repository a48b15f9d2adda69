import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timebin_qkd.detection import ClickOutcome
from timebin_qkd.errors import InvalidParameterError, UndefinedQberError
from timebin_qkd.experiments import ideal_config
from timebin_qkd.protocol import (Basis, TrialRecord, alice_encode, bob_basis_phase,
                                  estimate_qber, qber_from_visibility, run_trial, sift)


def test_alice_table():
    assert alice_encode(0, Basis.Z) == 0.0
    assert alice_encode(1, Basis.Z) == math.pi
    assert alice_encode(0, Basis.X) == math.pi / 2
    assert alice_encode(1, Basis.X) == 3 * math.pi / 2


def test_bob_table():
    assert bob_basis_phase(Basis.Z) == 0.0
    assert bob_basis_phase(Basis.X) == math.pi / 2


def test_encoding_completeness():
    phases = [alice_encode(b, k) for b in (0, 1) for k in Basis]
    residues = {round((p % (2 * math.pi)) / (math.pi / 2), 12) for p in phases}
    assert residues == {0.0, 1.0, 2.0, 3.0}


def test_invalid_choices():
    with pytest.raises(InvalidParameterError):
        alice_encode(2, Basis.Z)
    with pytest.raises(InvalidParameterError):
        alice_encode(0, 7)


@pytest.mark.parametrize("bit, basis", [(0, Basis.Z), (1, Basis.Z), (0, Basis.X), (1, Basis.X)])
def test_matched_basis_difference_is_0_or_pi(bit, basis):
    delta = (alice_encode(bit, basis) - bob_basis_phase(basis)) % (2 * math.pi)
    assert delta == pytest.approx(math.pi * bit)


def _bright_ideal(mu):
    config = ideal_config()
    return config.replace(source=replace(config.source, mean_photons_mu=mu))


@pytest.mark.parametrize("bit", [0, 1])
def test_matched_basis_is_deterministic(bit):
    config = _bright_ideal(20.0)
    rng = np.random.default_rng(bit)
    resolved = 0
    for gate in range(2000):
        basis = Basis(gate % 2)
        rec = run_trial(config, bit, basis, basis, rng, gate_index=gate)
        assert rec.outcome != ClickOutcome.BOTH
        if rec.outcome != ClickOutcome.NONE:
            assert rec.inferred_bit == bit
            resolved += 1
    assert resolved > 500


@pytest.mark.slow
def test_mismatched_bases_are_random():
    # mean photon number ln 2 per port maximizes the single-click fraction
    config = _bright_ideal(4 * math.log(2) / ideal_config().apd.quantum_efficiency)
    rng = np.random.default_rng(123)
    ones = resolved = 0
    gate = 0
    while resolved < 100_000:
        rec = run_trial(config, gate % 2, Basis.Z, Basis.X, rng, gate_index=gate)
        gate += 1
        if rec.resolved:
            resolved += 1
            ones += rec.inferred_bit
    assert abs(ones / resolved - 0.5) < 3 * math.sqrt(0.25 / resolved)


def test_run_trial_record_fields():
    rec = run_trial(ideal_config(), 1, Basis.X, Basis.Z, np.random.default_rng(0), gate_index=42)
    assert (rec.gate_index, rec.alice_bit, rec.alice_basis, rec.bob_basis) == \
        (42, 1, Basis.X, Basis.Z)
    assert rec.resolved == (rec.inferred_bit is not None)


# --- sifting and QBER --------------------------------------------------------

def _rec(i, bit, a, b, inferred):
    outcome = ClickOutcome.NONE if inferred is None else ClickOutcome(1 + inferred)
    return TrialRecord(i, bit, Basis(a), Basis(b), outcome, inferred)


def test_sift_all_kept():
    recs = [_rec(i, i % 2, i % 2, i % 2, i % 2) for i in range(10)]
    assert sift(recs) == recs


def test_sift_empty():
    assert sift([]) == []
    assert sift([_rec(0, 0, 0, 0, None)]) == []


records = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1),
                             st.one_of(st.none(), st.integers(0, 1))), max_size=50)


@given(records)
def test_sift_ignores_bit_values(raw):
    recs = [_rec(i, *r) for i, r in enumerate(raw)]
    flipped = [_rec(i, 1 - bit, a, b, None if inf is None else 1 - inf)
               for i, (bit, a, b, inf) in enumerate(raw)]
    assert [r.gate_index for r in sift(recs)] == [r.gate_index for r in sift(flipped)]
    kept = sift(recs)
    assert kept == [r for r in recs if r in kept]  # order preserved


def test_sift_fraction_for_random_bases():
    rng = np.random.default_rng(3)
    n = 100_000
    a, b = rng.integers(2, size=n), rng.integers(2, size=n)
    recs = [_rec(i, 0, a[i], b[i], 0) for i in range(n)]
    frac = len(sift(recs)) / n
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)


def test_qber_all_correct_and_all_flipped():
    good = [_rec(i, i % 2, 0, 0, i % 2) for i in range(20)]
    bad = [_rec(i, i % 2, 0, 0, 1 - i % 2) for i in range(20)]
    assert estimate_qber(good).qber == 0.0
    assert estimate_qber(bad).qber == 1.0
    report = estimate_qber(good[:10] + bad[:5])
    assert report.qber == pytest.approx(5 / 15)
    assert report.error_count <= report.sifted_count
    assert report.ci_low < report.qber < report.ci_high


def test_qber_undefined_when_nothing_sifted():
    report = estimate_qber([], n_gates=100, n_resolved=0)
    assert report.qber is None and not report.defined
    with pytest.raises(UndefinedQberError):
        report.require_qber()


def test_qber_rates():
    recs = [_rec(i, 0, 0, 0, 0) for i in range(30)]
    report = estimate_qber(recs, n_gates=1000, n_resolved=60)
    assert report.raw_rate_per_gate == pytest.approx(0.06)
    assert report.sift_fraction == pytest.approx(0.5)


@pytest.mark.parametrize("v, q", [(0.82, 0.09), (0.84, 0.08), (1.0, 0.0), (0.0, 0.5)])
def test_qber_from_visibility(v, q):
    assert qber_from_visibility(v) == pytest.approx(q, abs=1e-12)


@pytest.mark.parametrize("v", [-0.1, 1.01, math.nan])
def test_qber_from_visibility_rejects(v):
    with pytest.raises(InvalidParameterError):
        qber_from_visibility(v)
