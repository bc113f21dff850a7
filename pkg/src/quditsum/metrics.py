"""Coherence and fidelity measures on qudit, register and joint states."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .tensor import (
    DEFAULT_JOINT_CAP,
    ContractError,
    JointState,
    QuditState,
    RegisterState,
    ResourceError,
    join_full,
    kron_all,
)

PURE_TOL = 1e-10
FLAT_TOL = 1e-10


@dataclass(frozen=True)
class MetricSample:
    label: str
    c_l1: float
    c_l1_norm: float
    fidelity: float
    stage: str = ""

    def as_dict(self) -> dict:
        return {
            "checkpoint": self.label,
            "stage": self.stage,
            "fidelity": self.fidelity,
            "c_l1": self.c_l1,
            "c_l1_norm": self.c_l1_norm,
        }


def _l1_matrix(rho: np.ndarray) -> float:
    return float(np.sum(np.abs(rho)) - np.sum(np.abs(np.diag(rho))))


def _abs_sum(rho: np.ndarray) -> float:
    return float(np.sum(np.abs(rho)))


def _register_l1(reg: RegisterState, cap: int) -> float:
    if reg.is_product:
        # sum_ij |rho_ij| factorizes over a product, and each factor has unit trace
        return float(np.prod([_abs_sum(q.rho) for q in reg.qudits]) - 1.0)

    # Branches fixing a qudit to different basis digits have disjoint support,
    # so their off-diagonal entries never overlap.
    groups: dict[tuple, list] = defaultdict(list)
    for w, qudits in reg.branches:
        if w == 0:
            continue
        groups[tuple(q.basis_digit() for q in qudits)].append((w, qudits))
    keys = list(groups)
    if len({tuple(k is None for k in key) for key in keys}) > 1:
        # mixed label patterns: confirm every pair of groups still clashes somewhere
        arr = np.array([[-1 if k is None else k for k in key] for key in keys])
        for i in range(len(keys)):
            clash = ((arr[i] >= 0) & (arr >= 0) & (arr != arr[i])).any(axis=1)
            clash[i] = True
            if not clash.all():
                return _l1_matrix(join_full(reg, cap).rho)

    total = 0.0
    for key in keys:
        members = groups[key]
        if len(members) == 1:
            w, qudits = members[0]
            total += w * np.prod([_abs_sum(q.rho) for q in qudits])
            continue
        free = [t for t, k in enumerate(key) if k is None]
        if reg.d ** len(free) > cap:
            raise ResourceError("branch group too large for a dense coherence evaluation")
        mat = sum(w * kron_all([qudits[t].rho for t in reversed(free)]) for w, qudits in members)
        total += _abs_sum(mat)
    return float(total - 1.0)


def l1_coherence(state, cap: int = DEFAULT_JOINT_CAP) -> float:
    """Sum of absolute off-diagonal entries in the computational basis.

    Registers use the product rule ``C + 1 = prod_t (C_t + 1)`` per branch.
    """
    if isinstance(state, RegisterState):
        return _register_l1(state, cap)
    if isinstance(state, (QuditState, JointState)):
        return _l1_matrix(state.rho)
    return _l1_matrix(np.asarray(state))


def state_dimension(state) -> int:
    if isinstance(state, RegisterState):
        return state.d ** state.n
    if isinstance(state, (QuditState, JointState)):
        return state.rho.shape[0]
    return np.asarray(state).shape[0]


def normalized_coherence(state, cap: int = DEFAULT_JOINT_CAP) -> float:
    """``C_l1 / (D - 1)``; one exactly for maximally coherent states."""
    return l1_coherence(state, cap) / (state_dimension(state) - 1)


def coherence_from_fidelity(f: float, D: int) -> float:
    """Normalized coherence implied by overlap fidelity with a flat-phase reference."""
    return (D * f - 1) / (D - 1)


def fidelity_from_coherence(c_norm: float, D: int) -> float:
    return ((D - 1) * c_norm + 1) / D


def _phase_vector(rho: np.ndarray) -> np.ndarray | None:
    """Phases ``theta_k`` with ``rho_kl ~ |rho_kl| e^{i(theta_k - theta_l)}``.

    Walks the graph of nonzero entries from each unvisited index, so states
    with zero first rows still get a consistent assignment.
    """
    d = rho.shape[0]
    theta = np.full(d, np.nan)
    mag = np.abs(rho)
    scale = max(mag.max(), 1e-300)
    linked = mag > 1e-12 * scale
    for root in range(d):
        if not np.isnan(theta[root]):
            continue
        theta[root] = 0.0
        frontier = np.array([root])
        while frontier.size:
            hits = linked[:, frontier] & np.isnan(theta)[:, None]
            new = np.flatnonzero(hits.any(axis=1))
            parent = frontier[hits[new].argmax(axis=1)]
            theta[new] = theta[parent] + np.angle(rho[new, parent])
            frontier = new
    return theta


def flatten_phases(state):
    """Diagonal unitary ``U`` making every entry of ``U rho U^dagger`` real and nonnegative.

    Accepts a :class:`QuditState` or :class:`JointState`.  Returns
    ``(U, flattened)``.  Raises :class:`ContractError` when the state is not of
    the form ``C_kl e^{i(theta_k - theta_l)}`` with ``C_kl >= 0``.
    """
    rho = np.asarray(state.rho)
    theta = _phase_vector(rho)
    e = np.exp(-1j * theta)
    u = np.diag(e)
    flat = rho * np.outer(e, e.conj())
    if np.max(np.abs(flat - np.abs(rho))) > FLAT_TOL:
        raise ContractError("state is not of circuit form; phases cannot be flattened")
    if isinstance(state, JointState):
        return u, JointState.trusted(flat, state.d, state.n)
    return u, QuditState.trusted(flat)


def robustness_of_coherence(state) -> float:
    """Robustness of coherence for circuit-form states.

    For those states it coincides with the l1 coherence, which is what is
    returned after confirming the phases can be flattened.
    """
    if isinstance(state, RegisterState):
        for _, qudits in state.branches:
            for q in qudits:
                flatten_phases(q)
        return l1_coherence(state)
    _, flat = flatten_phases(state)
    return l1_coherence(flat)


def _check_pure_reference(reference: RegisterState) -> tuple[QuditState, ...]:
    if not reference.is_product:
        raise ContractError("reference must be a single product of pure qudits")
    for q in reference.qudits:
        purity = float(np.real(np.vdot(q.rho, q.rho)))
        if abs(purity - 1) > PURE_TOL:
            raise ContractError("reference qudits must be pure")
    return reference.qudits


def qudit_overlap(ref: np.ndarray, rho: np.ndarray) -> float:
    """``Tr(ref rho)`` for Hermitian matrices."""
    return float(np.real(np.vdot(ref, rho)))


def fidelity_pure(reference: RegisterState, rho: RegisterState) -> float:
    """``<Psi|rho|Psi>`` with ``Psi`` a product of pure qudit states.

    Mixtures contribute ``sum_b p_b prod_t <Psi_t|rho_bt|Psi_t>``.
    """
    refs = _check_pure_reference(reference)
    if rho.n != len(refs) or rho.d != reference.d:
        raise ContractError("reference and state registers differ in shape")
    f = 0.0
    for w, qudits in rho.branches:
        if w == 0:
            continue
        f += w * np.prod([qudit_overlap(r.rho, q.rho) for r, q in zip(refs, qudits)])
    return float(f)


def delta_metric(pre: MetricSample, post: MetricSample) -> tuple[float, float, float]:
    """``(X_in - X_out)`` for fidelity, l1 coherence and normalized coherence."""
    return (
        pre.fidelity - post.fidelity,
        pre.c_l1 - post.c_l1,
        pre.c_l1_norm - post.c_l1_norm,
    )
