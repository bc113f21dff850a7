"""Spin-1/2 chain realization of the adder gates by Hamiltonian evolution.

Every gate is replaced by ``exp(-i H tau)``; adjoint gates evolve under
``-H``.  At the revival times the evolved unitaries equal the circuit gates up
to a global phase.  Only ``d = 2`` is supported.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .digits import encode_digits
from .gates import (
    Gate,
    controlled_rotation,
    hadamard_d,
    iqft_schedule,
    qft_schedule,
    sum_schedule,
)
from .tensor import ContractError, DomainError, HERMITIAN_TOL

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
EYE2 = np.eye(2, dtype=np.complex128)


class UnsupportedError(DomainError):
    """The spin construction exists only for qubits."""


class TermKind(enum.Enum):
    HADAMARD_FIELD = "hadamard-field"
    ROTATION_COUPLING = "rotation-coupling"


@dataclass(frozen=True, eq=False)
class HamiltonianTerm:
    kind: TermKind
    coupling: float
    matrix: np.ndarray
    order: int | None = None
    sites: tuple[int, ...] = ()


def hadamard_hamiltonian(d: int = 2, site: int = 0) -> HamiltonianTerm:
    """``-(pi / sqrt 8)(sigma_x + sigma_z)``: longitudinal plus transverse field."""
    if d != 2:
        raise UnsupportedError("the field construction is defined for d = 2 only")
    j = math.pi / math.sqrt(8)
    return HamiltonianTerm(TermKind.HADAMARD_FIELD, j, -j * (SIGMA_X + SIGMA_Z), None, (site,))


def controlled_rotation_hamiltonian(q: int, sites: tuple[int, int] = (0, 1)) -> HamiltonianTerm:
    """``-J (I - sigma_z) x (I - sigma_z)`` with ``J = pi / 2**(q+1)``."""
    if q < 1:
        raise DomainError("rotation order must be >= 1")
    j = math.pi / 2 ** (q + 1)
    m = -j * np.kron(EYE2 - SIGMA_Z, EYE2 - SIGMA_Z)
    return HamiltonianTerm(TermKind.ROTATION_COUPLING, j, m, q, tuple(sites))


def evolve(h, tau: float) -> np.ndarray:
    """``exp(-i H tau)`` by exact eigendecomposition of a Hermitian ``H``."""
    m = h.matrix if isinstance(h, HamiltonianTerm) else np.asarray(h, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("Hamiltonian must be square")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise ContractError("Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh(m)
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``max |u - e^{i a} v|`` after choosing the best global phase ``a``."""
    z = np.vdot(v, u)
    phase = z / abs(z) if abs(z) > 0 else 1.0
    return float(np.max(np.abs(u - phase * v)))


def effective_scaling(tau: int, q: int) -> int:
    """Multiplier ``m`` with ``exp(-i H tau) = diag(1, 1, 1, e^{i m phi})``, ``phi = 2 pi / 2**q``.

    Read from the evolved unitary itself; ``m`` lies in ``0 .. 2**q - 1``.
    """
    if isinstance(tau, bool) or int(tau) != tau or tau < 1:
        raise DomainError("tau must be a positive integer")
    u = evolve(controlled_rotation_hamiltonian(q), tau)
    if np.max(np.abs(u[:3, :3] - np.eye(3))) > 1e-9 or np.max(np.abs(u - np.diag(np.diag(u)))) > 1e-9:
        raise ContractError("evolved coupling is not a controlled phase")
    phi = 2 * math.pi / 2**q
    return int(round(np.angle(u[3, 3]) / phi)) % 2**q


def formula_scaling(tau: int, q: int) -> int:
    """The combinatorial multiplier ``r + sum (z_i + 1)`` with ``tau = 2**q r + z``
    and ``z = sum 2**(q - z_i)``.  Kept only to report how it differs from
    :func:`effective_scaling`."""
    if int(tau) != tau or tau < 1:
        raise DomainError("tau must be a positive integer")
    r, z = divmod(int(tau), 2**q)
    zs = [q - k for k in range(q) if z >> k & 1]
    return r + sum(zi + 1 for zi in zs)


def scaling_metadata(tau: int, q: int) -> dict:
    m_direct = effective_scaling(tau, q)
    m_formula = formula_scaling(tau, q)
    return {
        "tau": tau,
        "q": q,
        "m_direct": m_direct,
        "m_formula": m_formula,
        "agree": (m_direct - m_formula) % 2**q == 0,
    }


# ---------------------------------------------------------------------------
# register simulation: a-register qubits 0..n-1, b-register qubits n..2n-1


def _apply_one(psi: np.ndarray, u: np.ndarray, s: int, N: int) -> np.ndarray:
    L, R = 2 ** (N - 1 - s), 2**s
    return np.matmul(u, psi.reshape(L, 2, R)).reshape(-1)


def _apply_two(psi: np.ndarray, u: np.ndarray, c: int, t: int, N: int) -> np.ndarray:
    """``u`` acts on ``(c, t)`` with ``c`` as the first tensor factor."""
    x = psi.reshape((2,) * N)
    ac, at = N - 1 - c, N - 1 - t
    x = np.moveaxis(x, (ac, at), (0, 1)).reshape(4, -1)
    x = (u @ x).reshape((2, 2) + (2,) * (N - 2))
    return np.moveaxis(x, (0, 1), (ac, at)).reshape(-1)


def _input_vector(a: int, b: int, n: int) -> np.ndarray:
    psi = np.zeros(2 ** (2 * n), dtype=np.complex128)
    psi[a + (b << n)] = 1.0
    return psi


def _control_site(g: Gate, n: int) -> int:
    return g.control if g.control_register == "a" else n + g.control


class _GateSet:
    """Unitaries for each gate kind, either from the circuit definitions or
    from Hamiltonian evolution at ``tau``."""

    def __init__(self, tau: float | None):
        self.tau = tau
        self._cache: dict = {}

    def get(self, g: Gate) -> np.ndarray:
        key = (g.kind, g.order)
        if key not in self._cache:
            self._cache[key] = self._build(g)
        return self._cache[key]

    def _build(self, g: Gate) -> np.ndarray:
        sign = -1.0 if g.kind.is_inverse else 1.0
        if self.tau is None:
            u = controlled_rotation(2, g.order) if g.kind.is_rotation else hadamard_d(2)
            return u.conj().T if g.kind.is_inverse else u
        term = controlled_rotation_hamiltonian(g.order) if g.kind.is_rotation else hadamard_hamiltonian()
        return evolve(sign * term.matrix, self.tau)


def _reduced_a(psi: np.ndarray, n: int) -> np.ndarray:
    m = psi.reshape(2**n, 2**n)  # rows: b index, cols: a index
    return m.T @ m.conj()


def _c_norm(rho: np.ndarray) -> float:
    D = rho.shape[0]
    return float((np.sum(np.abs(rho)) - np.sum(np.abs(np.diag(rho)))) / (D - 1))


@dataclass
class SpinPoint:
    tau: float | None
    q: int
    f_out: float
    c_l1_norm: float
    c_post_sum: float
    final_state: np.ndarray = field(repr=False, default=None)


def run_spin_adder(a: int, b: int, n: int, tau: float | None, q_band: int | None = None) -> SpinPoint:
    """Run the qubit adder with every gate replaced by its evolved Hamiltonian.

    ``tau=None`` uses the circuit gates themselves.  ``f_out`` is the
    probability of reading ``(a + b) mod 2**n``; ``c_l1_norm`` is the largest
    normalized coherence of the first register over the SUM stage.
    """
    q = n if q_band is None else q_band
    encode_digits(a, 2, n)
    encode_digits(b, 2, n)
    if not 1 <= q <= n:
        raise DomainError(f"banding order {q} outside 1..{n}")
    N = 2 * n
    gates = _GateSet(tau)
    psi = _input_vector(a, b, n)
    c_max = 0.0
    c_post = 0.0
    for stage, sched in (("qft", qft_schedule(n)), ("sum", sum_schedule(n, q)), ("iqft", iqft_schedule(n))):
        if stage == "sum":
            c_max = _c_norm(_reduced_a(psi, n))
        for g in sched.gates:
            u = gates.get(g)
            if g.kind.is_rotation:
                psi = _apply_two(psi, u, _control_site(g, n), g.target, N)
            else:
                psi = _apply_one(psi, u, g.target, N)
            if stage == "sum":
                c_max = max(c_max, _c_norm(_reduced_a(psi, n)))
        if stage == "sum":
            c_post = _c_norm(_reduced_a(psi, n))
    expected = (a + b) % 2**n
    f_out = float(np.sum(np.abs(psi.reshape(2**n, 2**n)[:, expected]) ** 2))
    return SpinPoint(tau, q, f_out, c_max, c_post, psi)


def gate_adder_state(a: int, b: int, n: int, q_band: int | None = None) -> np.ndarray:
    """Final two-register state of the circuit with exact gates."""
    return run_spin_adder(a, b, n, None, q_band).final_state


def _point(args) -> SpinPoint:
    a, b, n, tau, q = args
    p = run_spin_adder(a, b, n, tau, q)
    p.final_state = None
    return p


def spin_trace(a: int, b: int, n: int, taus: Sequence[float], q_band: int | None = None, jobs: int = 1) -> list[SpinPoint]:
    """One point per ``tau``, in input order regardless of ``jobs``."""
    work = [(a, b, n, float(t), q_band) for t in taus]
    if jobs <= 1:
        return [_point(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_point, work))


def estimate_period(values: Sequence[float], step: float, tol: float = 1e-9) -> float | None:
    """Smallest shift ``k * step`` with ``values[i + k] == values[i]`` for every ``i``.

    The shift must leave at least half of the samples to compare.
    """
    v = np.asarray(values, dtype=float)
    for k in range(1, len(v) // 2 + 1):
        if np.max(np.abs(v[k:] - v[:-k])) <= tol:
            return k * step
    return None


def revival_times(n: int, count: int = 3) -> list[int]:
    """First ``count`` times at which every gate of an ``n``-qubit adder is exact.

    The Hadamard field needs odd ``tau``; a coupling of order ``q`` needs
    ``tau = 1 mod 2**q``; the highest order in the circuit is ``n``.
    """
    period = 2**n
    return [1 + k * period for k in range(count)]
