"""Qudit Hadamard, controlled rotations and the QFT / SUM / IQFT schedules.

Rotation orders are positional: in the QFT, target ``t`` controlled by qudit
``j < t`` uses order ``t - j + 1``; in the SUM stage, target ``t`` controlled
by digit ``b_j`` (``j <= t``) uses order ``t - j + 1`` as well, so target
``t`` sees orders ``1 .. t + 1`` before banding.
"""

from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass, field

import numpy as np

from .tensor import DomainError

# test hook: added to every rotation phase (radians per unit of m*n/d**order)
_PHASE_ERROR = 0.0


@contextlib.contextmanager
def phase_error(eps: float):
    """Temporarily corrupt every rotation phase by a relative ``eps``.

    Only meant for negative-control checks of the verification suite.
    """
    global _PHASE_ERROR
    old = _PHASE_ERROR
    _PHASE_ERROR = eps
    try:
        yield
    finally:
        _PHASE_ERROR = old


class GateKind(enum.Enum):
    HADAMARD = "H"
    CONTROLLED_ROTATION = "R"
    INVERSE_HADAMARD = "H+"
    INVERSE_CONTROLLED_ROTATION = "R+"

    @property
    def is_rotation(self) -> bool:
        return self in (GateKind.CONTROLLED_ROTATION, GateKind.INVERSE_CONTROLLED_ROTATION)

    @property
    def is_inverse(self) -> bool:
        return self in (GateKind.INVERSE_HADAMARD, GateKind.INVERSE_CONTROLLED_ROTATION)

    def adjoint(self) -> "GateKind":
        return {
            GateKind.HADAMARD: GateKind.INVERSE_HADAMARD,
            GateKind.INVERSE_HADAMARD: GateKind.HADAMARD,
            GateKind.CONTROLLED_ROTATION: GateKind.INVERSE_CONTROLLED_ROTATION,
            GateKind.INVERSE_CONTROLLED_ROTATION: GateKind.CONTROLLED_ROTATION,
        }[self]


@dataclass(frozen=True)
class Gate:
    """One gate application.

    ``control_register`` is ``"a"`` when the control is a qudit of the
    Fourier-transformed register and ``"b"`` when it is a digit of the
    second addend.
    """

    kind: GateKind
    target: int
    control: int | None = None
    order: int | None = None
    control_register: str = "a"

    def __post_init__(self):
        if self.kind.is_rotation:
            if self.control is None or self.order is None or self.order < 1:
                raise DomainError("controlled rotation needs a control and order >= 1")
            if self.control_register == "a" and self.control == self.target:
                raise DomainError("control and target must differ")
        elif self.control is not None or self.order is not None:
            raise DomainError("Hadamard takes no control or order")

    def adjoint(self) -> "Gate":
        return Gate(self.kind.adjoint(), self.target, self.control, self.order, self.control_register)

    def __str__(self):
        if self.kind.is_rotation:
            return f"{self.kind.value}{self.order}({self.control_register}{self.control}->{self.target})"
        return f"{self.kind.value}({self.target})"


@dataclass(frozen=True)
class GateSchedule:
    gates: tuple[Gate, ...]
    noise_after: frozenset[int] = frozenset()
    layers: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if any(not 0 <= i < len(self.gates) for i in self.noise_after):
            raise DomainError("noise_after references a missing gate")
        if not self.layers:
            object.__setattr__(self, "layers", tuple((i,) for i in range(len(self.gates))))

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def rotation_count(self) -> int:
        return sum(g.kind.is_rotation for g in self.gates)


def hadamard_d(d: int) -> np.ndarray:
    """``H[m, n] = exp(2 pi i m n / d) / sqrt(d)``."""
    if d < 2:
        raise DomainError("d must be at least 2")
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)


def _rotation_phase(m, k, d: int, order: int):
    return 2 * np.pi * m * k / d**order * (1.0 + _PHASE_ERROR)


def controlled_rotation(d: int, order: int) -> np.ndarray:
    """Two-qudit diagonal gate; entry ``m*d + n`` carries ``exp(2 pi i m n / d**order)``.

    The first tensor factor (``m``) is the control.
    """
    if d < 2:
        raise DomainError("d must be at least 2")
    if order < 1:
        raise DomainError("rotation order must be >= 1")
    k = np.arange(d)
    ph = _rotation_phase(np.outer(k, k), 1, d, order).ravel()
    return np.diag(np.exp(1j * ph))


def reduced_rotation_phases(d: int, order: int, control_digit: int) -> np.ndarray:
    """Diagonal of :func:`reduced_rotation` as a vector."""
    if not 0 <= control_digit < d:
        raise DomainError(f"control digit {control_digit} out of range for d={d}")
    k = np.arange(d)
    return np.exp(1j * _rotation_phase(control_digit, k, d, order))


def reduced_rotation(d: int, order: int, control_digit: int) -> np.ndarray:
    """Target block of :func:`controlled_rotation` for a basis-state control."""
    if order < 1:
        raise DomainError("rotation order must be >= 1")
    return np.diag(reduced_rotation_phases(d, order, control_digit))


def qft_schedule(n: int) -> GateSchedule:
    """Encoding circuit: for ``t = n-1 .. 0``, ``H(t)`` then rotations from ``j = t-1 .. 0``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    gates: list[Gate] = []
    noisy = []
    for t in range(n - 1, -1, -1):
        gates.append(Gate(GateKind.HADAMARD, t))
        for j in range(t - 1, -1, -1):
            noisy.append(len(gates))
            gates.append(Gate(GateKind.CONTROLLED_ROTATION, t, j, t - j + 1))
    return GateSchedule(tuple(gates), frozenset(noisy))


def sum_schedule(n: int, q: int) -> GateSchedule:
    """Banded SUM stage, layered by rotation order.

    Layer ``k`` (``k = 1 .. q``) holds the order-``k`` rotations on every
    target ``t >= k - 1``, each controlled by ``b[t - k + 1]``; pairs within a
    layer are disjoint, so the depth equals ``q``.
    """
    if not 1 <= q <= n:
        raise DomainError(f"banding order {q} outside 1..{n}")
    gates: list[Gate] = []
    layers = []
    for order in range(1, q + 1):
        layer = []
        for t in range(n - 1, order - 2, -1):
            layer.append(len(gates))
            gates.append(Gate(GateKind.CONTROLLED_ROTATION, t, t - order + 1, order, "b"))
        layers.append(tuple(layer))
    return GateSchedule(tuple(gates), frozenset(range(len(gates))), tuple(layers))


def iqft_schedule(n: int) -> GateSchedule:
    """Decoding circuit: the QFT reversed, every gate replaced by its adjoint."""
    fwd = qft_schedule(n)
    m = len(fwd.gates)
    gates = tuple(g.adjoint() for g in reversed(fwd.gates))
    noisy = frozenset(m - 1 - i for i in fwd.noise_after)
    return GateSchedule(gates, noisy)


def rotation_count(n: int, q: int) -> int:
    """Number of SUM rotations at banding order ``q``: ``sum_t min(q, t + 1)``."""
    return sum(min(q, t + 1) for t in range(n))
