"""Small dense complex matrices and the qudit / register state model.

Ordering convention: qudit ``t = 0`` is the least-significant base-``d``
digit.  :func:`join_full` builds ``kron(rho[n-1], ..., rho[1], rho[0])`` so the
joint computational-basis index of a digit string ``x`` is
``sum(x[t] * d**t)``.  Every backend uses this layout, which keeps
cross-backend comparisons entrywise exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
# below this an eigenvalue is a real violation, not roundoff
PSD_HARD_TOL = 1e-8
UNITARY_TOL = 1e-10
DEFAULT_JOINT_CAP = 4096


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class ResourceError(RuntimeError):
    """A requested dense representation exceeds the configured size cap."""


def as_matrix(m, dim: int | None = None) -> np.ndarray:
    """Return ``m`` as a finite, square complex128 array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ContractError(f"expected dimension {dim}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    return a


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol, rtol=0))


def check_density_matrix(rho: np.ndarray) -> None:
    """Raise :class:`ContractError` unless ``rho`` is a valid density matrix."""
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise ContractError(f"trace is {tr}, expected 1")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ContractError("matrix is not Hermitian")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -PSD_HARD_TOL:
        raise ContractError(f"negative eigenvalue {lo}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuditState:
    """Density matrix of a single ``d``-level system."""

    rho: np.ndarray

    def __post_init__(self):
        rho = as_matrix(self.rho)
        if rho.shape[0] < 2:
            raise DomainError("qudit dimension must be at least 2")
        check_density_matrix(rho)
        object.__setattr__(self, "rho", _frozen(rho))

    @classmethod
    def trusted(cls, rho: np.ndarray) -> "QuditState":
        # skips validation; for arrays produced by the simulators themselves
        obj = object.__new__(cls)
        object.__setattr__(obj, "rho", _frozen(rho))
        return obj

    @property
    def d(self) -> int:
        return self.rho.shape[0]

    def basis_digit(self, tol: float = 1e-12) -> int | None:
        """Digit ``k`` if the state is the projector ``|k><k|``, else None."""
        diag = np.real(np.diag(self.rho))
        k = int(np.argmax(diag))
        if abs(diag[k] - 1) > tol:
            return None
        if np.max(np.abs(self.rho - np.diag(np.diag(self.rho)))) > tol:
            return None
        return k


@dataclass(frozen=True, eq=False)
class JointState:
    """Dense density matrix over ``n`` qudits of dimension ``d`` (``D = d**n``)."""

    rho: np.ndarray
    d: int
    n: int

    def __post_init__(self):
        rho = as_matrix(self.rho, self.d ** self.n)
        check_density_matrix(rho)
        object.__setattr__(self, "rho", _frozen(rho))

    @classmethod
    def trusted(cls, rho: np.ndarray, d: int, n: int) -> "JointState":
        obj = object.__new__(cls)
        object.__setattr__(obj, "rho", _frozen(rho))
        object.__setattr__(obj, "d", d)
        object.__setattr__(obj, "n", n)
        return obj

    @property
    def D(self) -> int:
        return self.rho.shape[0]


class Branch(NamedTuple):
    weight: float
    qudits: tuple[QuditState, ...]


@dataclass(frozen=True, eq=False)
class RegisterState:
    """Product state of ``n`` qudits, or a classical mixture of product states.

    A plain product register has a single branch of weight one.  Mixtures
    arise when a gate is controlled by a qudit that is an incoherent mixture
    of digits; each branch then fixes one control history.
    """

    branches: tuple[Branch, ...]

    def __post_init__(self):
        if not self.branches:
            raise ContractError("register needs at least one branch")
        d = self.branches[0].qudits[0].d
        n = len(self.branches[0].qudits)
        total = 0.0
        for w, qudits in self.branches:
            if w < 0:
                raise ContractError("branch weights must be nonnegative")
            if len(qudits) != n or any(q.d != d for q in qudits):
                raise ContractError("all branches need n qudits of dimension d")
            total += w
        if abs(total - 1) > TRACE_TOL:
            raise ContractError(f"branch weights sum to {total}")

    @classmethod
    def product(cls, qudits: Iterable[QuditState]) -> "RegisterState":
        return cls((Branch(1.0, tuple(qudits)),))

    @classmethod
    def mixture(cls, branches: Iterable[tuple[float, Sequence[QuditState]]]) -> "RegisterState":
        return cls(tuple(Branch(float(w), tuple(q)) for w, q in branches))

    @property
    def d(self) -> int:
        return self.branches[0].qudits[0].d

    @property
    def n(self) -> int:
        return len(self.branches[0].qudits)

    @property
    def is_product(self) -> bool:
        return len(self.branches) == 1

    @property
    def qudits(self) -> tuple[QuditState, ...]:
        if not self.is_product:
            raise ContractError("register is a branch mixture, not a single product")
        return self.branches[0].qudits


def pure_digit_state(k: int, d: int) -> QuditState:
    """Computational basis projector ``|k><k|``."""
    if d < 2:
        raise DomainError("d must be at least 2")
    if not 0 <= k < d:
        raise DomainError(f"digit {k} out of range for d={d}")
    rho = np.zeros((d, d), dtype=np.complex128)
    rho[k, k] = 1.0
    return QuditState.trusted(rho)


def apply_unitary(state: QuditState, u) -> QuditState:
    """Return ``U rho U^dagger``."""
    u = as_matrix(u)
    if u.shape[0] != state.d:
        raise ContractError(f"unitary has dimension {u.shape[0]}, state has {state.d}")
    if not is_unitary(u):
        raise ContractError("matrix is not unitary")
    return QuditState.trusted(u @ state.rho @ u.conj().T)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for m in mats:
        out = np.kron(out, m)
    return out


def join_full(reg: RegisterState, cap: int = DEFAULT_JOINT_CAP) -> JointState:
    """Dense joint density matrix ``sum_b p_b kron(rho[b, n-1], ..., rho[b, 0])``."""
    D = reg.d ** reg.n
    if D > cap:
        raise ResourceError(f"joint dimension {D} exceeds cap {cap}")
    rho = np.zeros((D, D), dtype=np.complex128)
    for w, qudits in reg.branches:
        if w == 0:
            continue
        rho += w * kron_all([q.rho for q in reversed(qudits)])
    return JointState.trusted(rho, reg.d, reg.n)


def local_operator(op: np.ndarray, t: int, n: int) -> np.ndarray:
    """Embed a single-qudit operator acting on qudit ``t`` into ``n`` qudits."""
    d = op.shape[0]
    eye = np.eye(d, dtype=np.complex128)
    return kron_all([op if s == t else eye for s in reversed(range(n))])


def apply_local(rho: np.ndarray, ops: Sequence[np.ndarray], t: int, n: int, d: int) -> np.ndarray:
    """Apply ``sum_k A_k rho A_k^dagger`` with each ``A_k`` acting on qudit ``t``.

    ``rho`` is a flat ``d**n`` square matrix; the result has the same shape.
    """
    D = d**n
    L, R = d ** (n - 1 - t), d**t
    r = np.asarray(rho).reshape(L, d, R * D)
    out = np.zeros((D * L, d, R), dtype=np.complex128)
    for a in ops:
        x = np.matmul(a, r).reshape(D * L, d, R)
        out += np.matmul(a.conj(), x)
    return out.reshape(D, D)


def apply_local_vector(psi: np.ndarray, u: np.ndarray, t: int, n: int, d: int) -> np.ndarray:
    """``(I x .. x U x .. x I) psi`` with ``U`` on qudit ``t``."""
    L, R = d ** (n - 1 - t), d**t
    return np.matmul(u, np.asarray(psi).reshape(L, d, R)).reshape(-1)


def partial_trace_qudit(rho: np.ndarray, t: int, n: int, d: int) -> np.ndarray:
    """Trace out qudit ``t`` from a flat ``d**n`` matrix."""
    ax = n - 1 - t
    r = rho.reshape((d,) * (2 * n))
    red = np.trace(r, axis1=ax, axis2=n + ax)
    m = d ** (n - 1)
    return red.reshape(m, m)


def insert_qudit(rho: np.ndarray, sigma: np.ndarray, t: int, n: int, d: int) -> np.ndarray:
    """Inverse of :func:`partial_trace_qudit` for a product: place ``sigma`` at qudit ``t``.

    ``rho`` lives on ``n - 1`` qudits; the result lives on ``n``.
    """
    ax = n - 1 - t
    r = rho.reshape((d,) * (2 * (n - 1)))
    full = np.multiply.outer(r, sigma)  # axes: rows(n-1), cols(n-1), s_row, s_col
    full = np.moveaxis(full, 2 * (n - 1), ax)
    full = np.moveaxis(full, 2 * (n - 1) + 1, n + ax)
    D = d ** n
    return full.reshape(D, D)


def digit_grid(d: int, n: int) -> np.ndarray:
    """Array of shape ``(d**n, n)`` with the base-``d`` digits of each index."""
    idx = np.arange(d ** n)
    return np.stack([(idx // d ** t) % d for t in range(n)], axis=1)
