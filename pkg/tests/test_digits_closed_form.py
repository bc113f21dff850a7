import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quditsum import AdderConfig, DigitString, DomainError, NoiseSpec, encode_digits, run_adder
from quditsum.closed_form import (
    adc_scaling_estimate,
    closed_form_banded_fidelity,
    closed_form_banded_pdc_fidelity,
    closed_form_coherence,
    closed_form_pdc_fidelity,
    closed_form_worst,
    dimension_fixed_value_fidelity,
    fixed_value_qudits,
    qudit_fidelity_factor,
    rotations_on_target,
    truncated_phase,
)
from quditsum.digits import as_digits, worst_digits


@pytest.mark.parametrize(
    "v,d,n,digits",
    [(5, 2, 3, (1, 0, 1)), (5, 3, 2, (2, 1)), (0, 4, 2, (0, 0)), (255, 4, 4, (3, 3, 3, 3))],
)
def test_encode_examples(v, d, n, digits):
    ds = encode_digits(v, d, n)
    assert ds.digits == digits
    assert ds.value == v


def test_encode_five_digit_example():
    assert encode_digits(1 * 4 + 3 * 16 + 3 * 64 + 1 * 256, 4, 5).digits == (0, 1, 3, 3, 1)


@given(d=st.integers(2, 9), n=st.integers(1, 6), data=st.data())
def test_encode_round_trip(d, n, data):
    v = data.draw(st.integers(0, d**n - 1))
    assert encode_digits(v, d, n).value == v


def test_digit_errors():
    with pytest.raises(DomainError):
        encode_digits(8, 2, 3)
    with pytest.raises(DomainError):
        DigitString((0, 3), 3)
    with pytest.raises(DomainError):
        as_digits([1, 0], 2, 3)


def test_as_digits_variants():
    assert as_digits(5, 2, 3).digits == (1, 0, 1)
    assert as_digits(DigitString((1,), 2), 2, 3).digits == (1, 0, 0)
    assert worst_digits(3, 2).value == 8


def test_rotations_on_target():
    assert [rotations_on_target(2, t) for t in range(4)] == [1, 2, 2, 2]


def test_truncated_phase_vanishes_without_banding():
    b = encode_digits(7, 2, 3)
    assert all(truncated_phase(b, 2, t, t + 1) == 0 for t in range(3))
    assert truncated_phase(b, 2, 1, 1) == pytest.approx(math.pi / 2)


def test_qudit_factor_limits():
    assert qudit_fidelity_factor(3, 1.0, 0.0) == pytest.approx(1)
    assert qudit_fidelity_factor(3, 0.0, 0.7) == pytest.approx(1 / 3)
    vec = qudit_fidelity_factor(2, 1.0, np.array([0.0, np.pi]))
    assert np.allclose(vec, [1, 0])


def test_pdc_examples():
    assert closed_form_pdc_fidelity(2, 3, 0.1, "in") == pytest.approx(0.85975, abs=1e-12)
    assert closed_form_pdc_fidelity(2, 3, 0.1, "out") == pytest.approx(0.65312, abs=1e-5)
    with pytest.raises(DomainError):
        closed_form_pdc_fidelity(2, 3, 0.1, "mid")
    with pytest.raises(DomainError):
        closed_form_pdc_fidelity(2, 3, 1.1, "in")


def test_banded_examples():
    assert closed_form_banded_fidelity([1, 1], 2, 2, 1) == pytest.approx(0.5)
    assert closed_form_banded_fidelity([0, 0, 0], 3, 3, 1) == pytest.approx(1)
    assert closed_form_banded_fidelity([2, 1, 2], 3, 3, 3) == pytest.approx(1)
    with pytest.raises(DomainError):
        closed_form_banded_fidelity([1, 1], 2, 2, 3)


@pytest.mark.parametrize("d,n,q,p", [(2, 3, 1, 0.0), (2, 4, 2, 0.1), (3, 3, 2, 0.05), (4, 2, 1, 0.2)])
def test_worst_matches_general_form(d, n, q, p):
    b = worst_digits(d, n)
    assert closed_form_worst(d, n, q, p) == pytest.approx(closed_form_banded_pdc_fidelity(b, d, n, q, p), abs=1e-12)


def test_unbanded_pdc_is_special_case():
    assert closed_form_banded_pdc_fidelity(5, 2, 3, 3, 0.1) == pytest.approx(closed_form_pdc_fidelity(2, 3, 0.1, "out"))


def test_coherence_formula():
    assert closed_form_coherence(2, 3, [1, 1, 1]) == pytest.approx(7)
    assert closed_form_coherence(3, 2, [0, 0]) == 0


@pytest.mark.parametrize("v,d,n", [(500, 2, 9), (500, 3, 6), (500, 8, 3), (8, 2, 3), (9, 2, 4), (1, 3, 1)])
def test_fixed_value_qudits(v, d, n):
    assert fixed_value_qudits(v, d) == n


def test_fixed_value_inclusive_adds_one_factor():
    f = dimension_fixed_value_fidelity(500, 3, 0.1)
    g = dimension_fixed_value_fidelity(500, 3, 0.1, inclusive_upper=True)
    assert f == pytest.approx(closed_form_pdc_fidelity(3, 6, 0.1, "out"))
    assert g == pytest.approx(closed_form_pdc_fidelity(3, 7, 0.1, "out"))
    with pytest.raises(DomainError):
        fixed_value_qudits(0, 2)


def test_adc_estimate_exact_on_first_exposure():
    sim = run_adder(AdderConfig(3, 1, 0, 2, None, NoiseSpec("adc", 0.2), stop_after="sum", trace=False))
    assert adc_scaling_estimate(2, 3, 1, 1, 0.2) == pytest.approx(sim.sample("post_sum").fidelity, abs=1e-12)


def test_adc_estimate_is_approximate_beyond_first_exposure():
    sim = run_adder(AdderConfig(2, 3, 0, 7, 2, NoiseSpec("adc", 0.1), stop_after="sum", trace=False))
    est = adc_scaling_estimate(7, 2, 3, 2, 0.1)
    assert abs(est - sim.sample("post_sum").fidelity) > 1e-3
    assert adc_scaling_estimate(7, 2, 3, 3, 0.0) == pytest.approx(1)
