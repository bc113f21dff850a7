"""Local noise channels on a single qudit and their element-scaling forms."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor import ContractError, DomainError, QuditState, as_matrix


class ChannelKind(enum.Enum):
    NONE = "none"
    PDC = "pdc"
    ADC = "adc"
    CDPC = "cdpc"

    @classmethod
    def parse(cls, value) -> "ChannelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown channel {value!r}") from None


def max_strength(kind: ChannelKind, d: int) -> float:
    """Largest admissible ``p``; amplitude damping needs ``1 - (d-1) p >= 0``."""
    if kind is ChannelKind.ADC:
        return 1.0 / (d - 1)
    return 1.0


def _check_p(kind: ChannelKind, d: int, p: float) -> None:
    if d < 2:
        raise DomainError("d must be at least 2")
    hi = max_strength(kind, d)
    if not 0.0 <= p <= hi + 1e-15:
        raise DomainError(f"{kind.value} strength {p} outside [0, {hi:.6g}] for d={d}")


@dataclass(frozen=True, eq=False)
class KrausSet:
    d: int
    kind: ChannelKind
    p: float
    operators: tuple[np.ndarray, ...]

    def completeness_error(self) -> float:
        """Max entrywise deviation of ``sum_E M_E^dagger M_E`` from the identity."""
        s = sum(m.conj().T @ m for m in self.operators)
        return float(np.max(np.abs(s - np.eye(self.d))))


def kraus_pdc(d: int, p: float) -> KrausSet:
    """Phase damping: ``M_0 = sqrt(1-p) I`` and ``M_{i+1} = sqrt(p) |i><i|``."""
    _check_p(ChannelKind.PDC, d, p)
    ops = [np.sqrt(1 - p) * np.eye(d, dtype=np.complex128)]
    for i in range(d):
        m = np.zeros((d, d), dtype=np.complex128)
        m[i, i] = np.sqrt(p)
        ops.append(m)
    return KrausSet(d, ChannelKind.PDC, p, tuple(ops))


def kraus_adc(d: int, p: float) -> KrausSet:
    """Amplitude damping with ``M_0 = sum_k sqrt(1 - k p) |k><k|`` and
    ``M_i = sum_k sqrt(p) |k><k+i|`` for ``i = 1 .. d-1``."""
    _check_p(ChannelKind.ADC, d, p)
    k = np.arange(d)
    ops = [np.diag(np.sqrt(np.clip(1 - k * p, 0.0, None))).astype(np.complex128)]
    for i in range(1, d):
        ops.append(np.sqrt(p) * np.eye(d, k=i, dtype=np.complex128))
    return KrausSet(d, ChannelKind.ADC, p, tuple(ops))


def weyl_operators(d: int) -> list[np.ndarray]:
    """The ``d**2`` clock-and-shift operators ``X^a Z^b``."""
    x = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    out = []
    for a in range(d):
        for b in range(d):
            out.append(np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b))
    return out


def kraus_cdpc(d: int, p: float) -> KrausSet:
    """Complete depolarization ``rho -> p I/d + (1-p) rho``.

    The Kraus form uses the Weyl basis; :func:`apply_channel` evaluates the
    affine map directly.
    """
    _check_p(ChannelKind.CDPC, d, p)
    w = weyl_operators(d)
    ops = [np.sqrt(1 - p + p / d**2) * w[0]]
    ops += [np.sqrt(p) / d * m for m in w[1:]]
    return KrausSet(d, ChannelKind.CDPC, p, tuple(ops))


def make_channel(kind, d: int, p: float) -> KrausSet | None:
    kind = ChannelKind.parse(kind)
    if kind is ChannelKind.NONE:
        return None
    return {ChannelKind.PDC: kraus_pdc, ChannelKind.ADC: kraus_adc, ChannelKind.CDPC: kraus_cdpc}[kind](d, p)


def channel_array(rho: np.ndarray, ch: KrausSet) -> np.ndarray:
    """Unchecked channel action on a raw ``d x d`` array."""
    if ch.kind is ChannelKind.CDPC:
        return ch.p * np.trace(rho) * np.eye(ch.d) / ch.d + (1 - ch.p) * rho
    return sum(m @ rho @ m.conj().T for m in ch.operators)


def apply_channel(state: QuditState, ch: KrausSet) -> QuditState:
    """``sum_E M_E rho M_E^dagger``; depolarization uses its affine form."""
    if state.d != ch.d:
        raise ContractError(f"channel dimension {ch.d} does not match state dimension {state.d}")
    return QuditState.trusted(channel_array(np.array(state.rho), ch))


def element_scaling_pdc(t_exposures: int, d: int, p: float) -> np.ndarray:
    """Factors ``(1-p)**(t (1 - delta_kl))`` for ``t`` phase-damping exposures."""
    if t_exposures < 0:
        raise DomainError("number of exposures must be >= 0")
    _check_p(ChannelKind.PDC, d, p)
    s = np.full((d, d), (1 - p) ** t_exposures)
    np.fill_diagonal(s, 1.0)
    return s


def element_scaling_adc(d: int, p: float) -> np.ndarray:
    """Single-exposure factors ``sqrt((1-kp)(1-lp)) + p (d - 1 - max(k, l))``.

    Exact only for states whose entries depend on ``k - l`` alone; see
    :func:`apply_adc_scaling`.
    """
    _check_p(ChannelKind.ADC, d, p)
    k = np.arange(d)
    amp = np.sqrt(np.clip(1 - k * p, 0.0, None))
    return np.outer(amp, amp) + p * (d - 1 - np.maximum.outer(k, k))


def is_shift_invariant(rho: np.ndarray, tol: float = 1e-9) -> bool:
    """True when ``rho[k, l] == rho[k+m, l+m]`` for all valid shifts."""
    d = rho.shape[0]
    for m in range(1, d):
        if np.max(np.abs(rho[m:, m:] - rho[: d - m, : d - m])) > tol:
            return False
    return True


def apply_adc_scaling(state: QuditState, p: float) -> QuditState:
    """One amplitude-damping exposure via element scaling, for shift-invariant states."""
    rho = as_matrix(state.rho)
    if not is_shift_invariant(rho):
        raise ContractError("element scaling needs rho[k,l] == rho[k+m,l+m]")
    return QuditState.trusted(rho * element_scaling_adc(state.d, p))


@dataclass(frozen=True)
class NoiseSpec:
    """Which channel acts, how strongly, and where.

    Noise follows each controlled rotation; Hadamards are noise-free.
    ``on_control`` also exposes the control qudit of each rotation.
    """

    kind: ChannelKind = ChannelKind.NONE
    p: float = 0.0
    after_qft_rotations: bool = True
    after_sum_rotations: bool = True
    after_iqft_rotations: bool = False
    on_control: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind.parse(self.kind))
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"noise strength {self.p} outside [0, 1]")

    @property
    def active(self) -> bool:
        return self.kind is not ChannelKind.NONE and self.p > 0

    def channel(self, d: int) -> KrausSet | None:
        if not self.active:
            return None
        return make_channel(self.kind, d, self.p)

    def applies_to(self, stage: str) -> bool:
        return {
            "qft": self.after_qft_rotations,
            "sum": self.after_sum_rotations,
            "iqft": self.after_iqft_rotations,
        }[stage]
