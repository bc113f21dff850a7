import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quditsum.closed_form import closed_form_banded_fidelity
from quditsum.gates import controlled_rotation, hadamard_d
from quditsum.spin_chain import (
    ContractError,
    DomainError,
    TermKind,
    UnsupportedError,
    controlled_rotation_hamiltonian,
    effective_scaling,
    estimate_period,
    evolve,
    formula_scaling,
    gate_adder_state,
    hadamard_hamiltonian,
    phase_aligned_distance,
    revival_times,
    run_spin_adder,
    scaling_metadata,
    spin_trace,
)


@pytest.mark.parametrize("tau", [1, 3, 5, 7])
def test_hadamard_at_odd_times(tau):
    u = evolve(hadamard_hamiltonian(), tau)
    assert phase_aligned_distance(u, hadamard_d(2)) < 1e-12


@pytest.mark.parametrize("tau", [2, 4])
def test_hadamard_field_is_identity_at_even_times(tau):
    assert phase_aligned_distance(evolve(hadamard_hamiltonian(), tau), np.eye(2)) < 1e-12


def test_hamiltonian_terms():
    h = hadamard_hamiltonian()
    assert h.kind is TermKind.HADAMARD_FIELD
    assert h.coupling == pytest.approx(math.pi / math.sqrt(8))
    c = controlled_rotation_hamiltonian(3, (0, 2))
    assert c.coupling == pytest.approx(math.pi / 16)
    assert c.sites == (0, 2)
    assert np.allclose(c.matrix, np.diag([0, 0, 0, -4 * c.coupling]))


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_coupling_at_unit_time_is_the_gate(q):
    u = evolve(controlled_rotation_hamiltonian(q), 1)
    assert np.allclose(u, controlled_rotation(2, q))


def test_evolve_group_property():
    h = hadamard_hamiltonian().matrix + 0.3 * np.diag([1.0, -1.0])
    assert np.allclose(evolve(h, 0.4) @ evolve(h, 0.7), evolve(h, 1.1))
    assert np.allclose(evolve(h, 0), np.eye(2))


def test_evolve_rejects_bad_hamiltonians():
    with pytest.raises(ContractError):
        evolve(np.array([[0, 1], [0, 0]]), 1.0)
    with pytest.raises(ContractError):
        evolve(np.ones((2, 3)), 1.0)


def test_qubits_only():
    with pytest.raises(UnsupportedError):
        hadamard_hamiltonian(3)
    assert issubclass(UnsupportedError, DomainError)


@pytest.mark.parametrize("tau,q,m", [(1, 2, 1), (3, 2, 3), (5, 2, 1), (9, 3, 1), (2, 1, 0)])
def test_effective_scaling(tau, q, m):
    assert effective_scaling(tau, q) == m


@settings(max_examples=40, deadline=None)
@given(tau=st.integers(1, 200), q=st.integers(1, 5))
def test_effective_scaling_is_tau_mod_period(tau, q):
    assert effective_scaling(tau, q) == tau % 2**q


def test_formula_scaling_and_metadata():
    assert formula_scaling(9, 3) == 5
    meta = scaling_metadata(1, 2)
    assert meta["m_direct"] == 1 and meta["m_formula"] == 3
    assert meta["agree"] is False
    with pytest.raises(DomainError):
        effective_scaling(1.5, 2)
    with pytest.raises(DomainError):
        formula_scaling(0, 2)


@pytest.mark.parametrize("a,b,n", [(7, 7, 4), (3, 2, 3), (1, 3, 2)])
def test_revival_reproduces_adder(a, b, n):
    for tau in revival_times(n, 2):
        p = run_spin_adder(a, b, n, tau)
        assert p.f_out == pytest.approx(1, abs=1e-10)
    ideal = gate_adder_state(a, b, n)
    assert phase_aligned_distance(run_spin_adder(a, b, n, 1.0).final_state, ideal) < 1e-10


def test_zero_time_is_identity():
    assert run_spin_adder(5, 0, 3, 0.0).f_out == pytest.approx(1)
    assert run_spin_adder(5, 1, 3, 0.0).f_out == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("q", [1, 2, 3])
def test_banded_unit_time_matches_closed_form(q):
    # the decode stage is exact at tau = 1, so reading the sum is the post-SUM overlap
    p = run_spin_adder(7, 7, 4, 1.0, q)
    assert p.f_out == pytest.approx(closed_form_banded_fidelity(7, 2, 4, q), abs=1e-12)


def test_coherence_is_maximal_at_revival():
    p = run_spin_adder(7, 7, 4, 1.0)
    assert p.c_l1_norm == pytest.approx(1)


def test_fidelity_peaks_sit_on_coherence_peaks():
    taus = np.arange(0, 17, 1.0)
    pts = spin_trace(7, 7, 4, taus, q_band=2)
    f = np.array([p.f_out for p in pts])
    c = np.array([p.c_l1_norm for p in pts])
    for i in np.flatnonzero(f > f.max() - 1e-9):
        assert c[i] == pytest.approx(c.max(), abs=1e-9)


def test_spin_trace_independent_of_jobs():
    taus = [0.5, 1.0, 2.25, 3.0]
    serial = spin_trace(3, 5, 3, taus)
    parallel = spin_trace(3, 5, 3, taus, jobs=2)
    assert [p.tau for p in serial] == taus
    assert [p.f_out for p in serial] == [p.f_out for p in parallel]


def test_estimate_period():
    v = np.tile([0.1, 0.5, 0.9, 0.5], 6)
    assert estimate_period(v, 0.25) == pytest.approx(1.0)
    assert estimate_period(np.arange(10.0), 1.0) is None


def test_revival_times():
    assert revival_times(4) == [1, 17, 33]


def test_input_validation():
    with pytest.raises(DomainError):
        run_spin_adder(8, 0, 3, 1.0)
    with pytest.raises(DomainError):
        run_spin_adder(1, 0, 3, 1.0, q_band=4)
