import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quditsum import AdderConfig, Backend, ChannelKind, NoiseSpec, run_adder
from quditsum.channels import apply_channel, kraus_pdc
from quditsum.metrics import (
    MetricSample,
    coherence_from_fidelity,
    delta_metric,
    fidelity_from_coherence,
    fidelity_pure,
    flatten_phases,
    l1_coherence,
    normalized_coherence,
    robustness_of_coherence,
)
from quditsum.tensor import ContractError, JointState, QuditState, RegisterState, join_full, pure_digit_state


def _plus(d, phases=None):
    psi = np.ones(d) / np.sqrt(d)
    if phases is not None:
        psi = psi * np.exp(1j * np.asarray(phases))
    return QuditState(np.outer(psi, psi.conj()))


def test_incoherent_states():
    assert l1_coherence(pure_digit_state(0, 2)) == 0
    assert l1_coherence(QuditState(np.diag([0.2, 0.8]))) == 0


@pytest.mark.parametrize("d", [2, 3, 5])
def test_maximally_coherent_qudit(d):
    assert l1_coherence(_plus(d)) == pytest.approx(d - 1)
    assert normalized_coherence(_plus(d)) == pytest.approx(1)


def test_product_rule_matches_joint():
    reg = RegisterState.product([_plus(2), _plus(2)])
    assert l1_coherence(reg) == pytest.approx(3)
    assert l1_coherence(join_full(reg)) == pytest.approx(3)
    assert normalized_coherence(reg) == pytest.approx(1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 3), branches=st.integers(1, 3))
def test_register_coherence_matches_dense(seed, n, branches):
    rng = np.random.default_rng(seed)
    d = 2
    items = []
    w = rng.dirichlet(np.ones(branches))
    for i in range(branches):
        qs = []
        for t in range(n):
            if rng.random() < 0.4:
                qs.append(pure_digit_state(int(rng.integers(d)), d))
            else:
                qs.append(_plus(d, rng.uniform(0, 2 * np.pi, d)))
        items.append((w[i], qs))
    reg = RegisterState.mixture(items)
    assert l1_coherence(reg) == pytest.approx(l1_coherence(join_full(reg)), abs=1e-12)


def test_post_qft_state_is_maximally_coherent():
    rec = run_adder(AdderConfig(2, 3, 5, 0, trace=False, stop_after="qft"))
    assert rec.sample("pre_sum").c_l1_norm == pytest.approx(1)


def test_norm_relation():
    rec = run_adder(AdderConfig(3, 2, 1, 4, None, NoiseSpec("pdc", 0.2)))
    for s in rec.samples:
        assert s.c_l1_norm == pytest.approx(s.c_l1 / 8, abs=1e-12)


def test_coherence_fidelity_round_trip():
    for D in (2, 8, 27):
        for f in (1 / D, 0.5, 1.0):
            assert fidelity_from_coherence(coherence_from_fidelity(f, D), D) == pytest.approx(f)
    assert coherence_from_fidelity(1.0, 8) == 1.0


def test_flatten_diagonal_state():
    rho = QuditState(np.diag([0.3, 0.7]))
    u, flat = flatten_phases(rho)
    assert np.allclose(u, np.eye(2))
    assert np.allclose(flat.rho, rho.rho)


def test_flatten_hadamard_phase():
    phi = 0.7
    rho = _plus(2, [0, phi])
    u, flat = flatten_phases(rho)
    assert np.allclose(flat.rho, 0.5)
    assert np.allclose(u, np.diag([1, np.exp(-1j * phi)]))


def test_flatten_noisy_post_qft_qutrit():
    p = 0.15
    rec = run_adder(AdderConfig(3, 3, 5, 0, None, NoiseSpec("pdc", p), stop_after="qft"), keep_states=True)
    reg = rec.states["pre_sum"]
    for t, q in enumerate(reg.qudits):
        _, flat = flatten_phases(q)
        off = flat.rho[~np.eye(3, dtype=bool)]
        assert np.allclose(off, (1 - p) ** t / 3)


def test_flatten_rejects_non_circuit_form():
    # a real negative entry that no diagonal phase can fix: rho_01 rho_12 rho_20 has phase pi
    m = np.array([[1, 0.4, 0.4], [0.4, 1, 0.4], [0.4, 0.4, 1]], dtype=complex) / 3
    m[0, 1] = m[1, 0] = -0.4 / 3
    with pytest.raises(ContractError):
        flatten_phases(QuditState(m))


def test_robustness_equals_l1_on_circuit_states():
    rho = apply_channel(_plus(3, [0, 1.0, 2.5]), kraus_pdc(3, 0.3))
    assert robustness_of_coherence(rho) == pytest.approx(l1_coherence(rho))


def test_fidelity_pure_basics():
    ref = RegisterState.product([pure_digit_state(0, 2), _plus(2)])
    assert fidelity_pure(ref, ref) == pytest.approx(1)
    other = RegisterState.product([pure_digit_state(1, 2), _plus(2)])
    assert fidelity_pure(ref, other) == pytest.approx(0)
    with pytest.raises(ContractError):
        fidelity_pure(RegisterState.product([QuditState(np.eye(2) / 2)]), ref)


def test_post_sum_fidelity_instance():
    rec = run_adder(AdderConfig(2, 3, 3, 7, None, NoiseSpec("pdc", 0.1), stop_after="sum"))
    assert rec.sample("post_sum").fidelity == pytest.approx(0.6531, abs=1e-4)


def test_delta_metric():
    s = MetricSample("x", 1.0, 0.5, 0.9)
    assert delta_metric(s, s) == (0, 0, 0)
    rec = run_adder(AdderConfig(2, 3, 0, 7, None, NoiseSpec("pdc", 0.1), stop_after="sum"))
    df, dc, dcn = delta_metric(rec.sample("pre_sum"), rec.sample("post_sum"))
    assert df == pytest.approx(0.20663, abs=1e-4)
    assert dcn == pytest.approx(df / (1 - 1 / 8), abs=1e-12)
    assert dcn == pytest.approx(0.23615, abs=1e-4)


def test_joint_state_coherence_and_flatten():
    rec = run_adder(AdderConfig(2, 2, 1, 2, None, NoiseSpec(ChannelKind.ADC, 0.2), Backend.JOINT, stop_after="sum"), True)
    st = rec.states["post_sum"]
    assert isinstance(st, JointState)
    _, flat = flatten_phases(st)
    assert l1_coherence(flat) == pytest.approx(l1_coherence(st), abs=1e-12)
