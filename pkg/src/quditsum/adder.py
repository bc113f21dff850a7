"""Full adder runs: encode two integers, add in the phase, decode.

Two simulators share one gate walk:

* the term engine (``product`` / ``branch`` backends) keeps the register as a
  weighted sum of product operators ``sum_T w_T A_T[n-1] x ... x A_T[0]``.
  When a rotation is controlled by a qudit that is not a single matrix unit,
  that qudit is split into its nonzero entries; each piece then steers the
  target deterministically.  A noiseless run never splits beyond one term.
* the joint engine keeps a dense ``d**N`` density matrix and serves as the
  oracle for the term engine.

A third path evaluates the closed forms of :mod:`quditsum.closed_form`.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import closed_form as cf
from . import gates as gates_mod
from .channels import ChannelKind, KrausSet, NoiseSpec, channel_array, max_strength
from .digits import DigitString, encode_digits
from .gates import (
    Gate,
    GateKind,
    GateSchedule,
    controlled_rotation,
    hadamard_d,
    iqft_schedule,
    qft_schedule,
    reduced_rotation_phases,
    sum_schedule,
)
from .metrics import MetricSample
from .tensor import (
    DEFAULT_JOINT_CAP,
    Branch,
    DomainError,
    JointState,
    QuditState,
    RegisterState,
    ResourceError,
    apply_local,
    apply_local_vector,
    digit_grid,
    insert_qudit,
    kron_all,
    partial_trace_qudit,
)

__all__ = [
    "AdderConfig",
    "Backend",
    "BackendError",
    "DigitString",
    "RunRecord",
    "decode_measure",
    "encode_digits",
    "run_adder",
]

STAGES = ("qft", "sum", "iqft")
STAGE_END = {"qft": "pre_sum", "sum": "post_sum", "iqft": "final"}
NAMED_CHECKPOINTS = ("input", "pre_sum", "post_sum", "final")

# terms whose weight times entry magnitude falls below this are dropped
PRUNE_TOL = 1e-15
TIE_TOL = 1e-12
DEFAULT_MAX_TERMS = 1 << 18
DIST_CAP = 1 << 20


class BackendError(ValueError):
    """The requested backend cannot represent this configuration."""


class Backend(enum.Enum):
    PRODUCT = "product"
    BRANCH = "branch"
    JOINT = "joint"
    CLOSED_FORM = "closed-form"

    @classmethod
    def parse(cls, value) -> "Backend":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "-")
        if v == "closedform":
            v = "closed-form"
        try:
            return cls(v)
        except ValueError:
            raise DomainError(f"unknown backend {value!r}") from None


def _as_value(x, d: int, n: int, name: str) -> int:
    if isinstance(x, (DigitString, list, tuple)):
        digits = x if isinstance(x, DigitString) else DigitString(tuple(x), d)
        if digits.d != d or any(digits.digits[n:]):
            raise DomainError(f"{name} is not representable with {n} base-{d} digits")
        return digits.value
    v = int(x)
    if not 0 <= v < d**n:
        raise DomainError(f"{name}={v} is not representable with {n} base-{d} digits")
    return v


@dataclass(frozen=True)
class AdderConfig:
    """One adder run.

    ``q`` defaults to no banding.  ``modular=False`` adds one target qudit so
    the register holds the full sum.  ``stop_after`` may cut the run after
    ``"qft"`` or ``"sum"``.  ``seed`` is unused (every path is exact) and is
    echoed for provenance only.
    """

    d: int
    n: int
    a: int = 0
    b: int = 0
    q: int | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    backend: Backend = Backend.PRODUCT
    modular: bool = True
    trace: bool = True
    stop_after: str = "iqft"
    joint_cap: int = DEFAULT_JOINT_CAP
    max_terms: int = DEFAULT_MAX_TERMS
    seed: int | None = None

    def __post_init__(self):
        if self.d < 2:
            raise DomainError("d must be at least 2")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        object.__setattr__(self, "a", _as_value(self.a, self.d, self.n, "a"))
        object.__setattr__(self, "b", _as_value(self.b, self.d, self.n, "b"))
        object.__setattr__(self, "backend", Backend.parse(self.backend))
        if self.q is None:
            object.__setattr__(self, "q", self.n_target)
        if not 1 <= self.q <= self.n_target:
            raise DomainError(f"banding order {self.q} outside 1..{self.n_target}")
        if self.stop_after not in STAGES:
            raise DomainError(f"stop_after must be one of {STAGES}")
        hi = max_strength(self.noise.kind, self.d)
        if self.noise.p > hi + 1e-15:
            raise DomainError(f"{self.noise.kind.value} strength {self.noise.p} exceeds {hi:.6g} for d={self.d}")
        if self.backend is Backend.PRODUCT and self.noise.active and self.noise.on_control:
            raise BackendError("noise on controls needs the branch or joint backend")
        if self.backend is Backend.CLOSED_FORM:
            _check_closed_form(self)

    @property
    def n_target(self) -> int:
        return self.n if self.modular else self.n + 1

    @property
    def a_digits(self) -> DigitString:
        return encode_digits(self.a, self.d, self.n_target)

    @property
    def b_digits(self) -> DigitString:
        return encode_digits(self.b, self.d, self.n_target)

    @property
    def expected(self) -> int:
        s = self.a + self.b
        return s % self.d**self.n if self.modular else s

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "a": self.a,
            "b": self.b,
            "q": self.q,
            "noise": self.noise.kind.value,
            "p": self.noise.p,
            "after_qft_rotations": self.noise.after_qft_rotations,
            "after_sum_rotations": self.noise.after_sum_rotations,
            "after_iqft_rotations": self.noise.after_iqft_rotations,
            "on_control": self.noise.on_control,
            "backend": self.backend.value,
            "modular": self.modular,
            "stop_after": self.stop_after,
            "seed": self.seed,
        }


def _check_closed_form(cfg: AdderConfig) -> None:
    nz = cfg.noise
    if not nz.active:
        return
    if nz.kind is ChannelKind.ADC:
        raise BackendError("no closed form for amplitude damping; use a simulation backend")
    if nz.after_iqft_rotations:
        raise BackendError("closed forms assume a noiseless decoding stage")
    if nz.on_control and nz.kind is ChannelKind.CDPC:
        raise BackendError("depolarized controls have no closed form")


@dataclass
class RunRecord:
    config: AdderConfig
    samples: tuple[MetricSample, ...]
    decoded: int | None
    success_prob: float | None
    gate_count: int
    depth: int
    distribution: np.ndarray | None = None
    b_register: dict | None = None
    states: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def sample(self, label: str) -> MetricSample:
        for s in self.samples:
            if s.label == label:
                return s
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.samples]


# ---------------------------------------------------------------------------
# shared gate walk


def schedules_for(cfg: AdderConfig) -> list[tuple[str, GateSchedule]]:
    out = _stage_schedules(cfg.n_target, cfg.q)
    return list(out[: STAGES.index(cfg.stop_after) + 1])


Visit = Callable[[str, str, "tuple[str, int] | None"], None]


def _walk(engine, stages, noise: NoiseSpec, visit: Visit) -> None:
    visit("input", "input", None)
    k = 0
    for stage, sched in stages:
        noisy = noise.active and noise.applies_to(stage)
        for i, g in enumerate(sched.gates):
            engine.apply(g)
            if noisy and i in sched.noise_after:
                engine.noise(g)
            k += 1
            visit(f"after_gate_{k}", stage, (stage, i))
        visit(STAGE_END[stage], stage, None)


@functools.lru_cache(maxsize=512)
def _rotation_table_cached(d: int, order: int, inverse: bool, _err: float) -> np.ndarray:
    tab = np.array([reduced_rotation_phases(d, order, x) for x in range(d)])
    tab = tab.conj() if inverse else tab
    tab.setflags(write=False)
    return tab


def _rotation_table(d: int, order: int, inverse: bool) -> np.ndarray:
    # the phase-error hook is part of the key so corrupted tables never leak out
    return _rotation_table_cached(d, order, inverse, gates_mod._PHASE_ERROR)


@functools.lru_cache(maxsize=64)
def _hadamard(d: int) -> np.ndarray:
    h = hadamard_d(d)
    h.setflags(write=False)
    return h


@functools.lru_cache(maxsize=256)
def _stage_schedules(nt: int, q: int) -> tuple[tuple[str, GateSchedule], ...]:
    return (("qft", qft_schedule(nt)), ("sum", sum_schedule(nt, q)), ("iqft", iqft_schedule(nt)))


def _basis(k: int, d: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=np.complex128)
    m[k, k] = 1.0
    return m


@functools.lru_cache(maxsize=4096)
def _fourier(v: int, d: int, nt: int) -> tuple[np.ndarray, ...]:
    """Qudit ``t`` carries phase ``2 pi (v mod d**(t+1)) / d**(t+1)`` per level."""
    out = []
    k = np.arange(d)
    for t in range(nt):
        theta = 2 * math.pi * ((v % d ** (t + 1)) / d ** (t + 1))
        psi = np.exp(1j * theta * k) / math.sqrt(d)
        m = np.outer(psi, psi.conj())
        m.setflags(write=False)
        out.append(m)
    return tuple(out)


def _argmax_smallest(dist: np.ndarray) -> int:
    top = dist.max()
    return int(np.flatnonzero(dist >= top - TIE_TOL)[0])


def _b_transitions(ch: KrausSet) -> np.ndarray:
    """``T[y, y']``: probability a basis digit ``y`` ends as ``y'`` after the channel."""
    d = ch.d
    out = np.zeros((d, d))
    for y in range(d):
        r = channel_array(_basis(y, d), ch)
        if np.max(np.abs(r - np.diag(np.diag(r)))) > 1e-12:
            raise BackendError("channel creates coherence on a basis-state control")
        out[y] = np.real(np.diag(r))
    return out


# ---------------------------------------------------------------------------
# term engine


class _TermEngine:
    """Weighted sum of product operators over the target register.

    ``A[t]`` has shape ``(T, d, d)``; ``label[T, t]`` is ``x*d + x'`` when
    ``A[t]`` of that term is a multiple of ``|x><x'|`` and ``-1`` otherwise.
    A position is labeled in every term or in none, so two terms with
    different label rows have disjoint matrix support.  ``b[T]`` holds the
    second addend's digits for each term.
    """

    def __init__(self, d: int, nt: int, a: Sequence[int], b: Sequence[int], noise: NoiseSpec, max_terms: int):
        self.d, self.n = d, nt
        self.w = np.ones(1)
        self.A = [_basis(int(a[t]), d)[None] for t in range(nt)]
        self.label = np.full((1, nt), -1, dtype=np.int64)
        self.b = np.array([list(b)], dtype=np.int64)
        self.h = _hadamard(d)
        self.ch = noise.channel(d)
        self.on_control = noise.on_control and self.ch is not None
        self.max_terms = max_terms
        self._btrans = _b_transitions(self.ch) if self.on_control else None

    @property
    def terms(self) -> int:
        return self.w.shape[0]

    def apply(self, g: Gate) -> None:
        t = g.target
        if not g.kind.is_rotation:
            u = self.h.conj().T if g.kind is GateKind.INVERSE_HADAMARD else self.h
            self.A[t] = u @ self.A[t] @ u.conj().T
            self.label[:, t] = -1
            return
        tab = _rotation_table(self.d, g.order, g.kind.is_inverse)
        if self.w.size == 1:
            # single term: scalar indices avoid fancy-indexing overhead
            if g.control_register == "b":
                xl = xr = int(self.b[0, g.control])
            else:
                self._split(g.control)
            if self.w.size == 1:
                if g.control_register != "b":
                    xl, xr = divmod(int(self.label[0, g.control]), self.d)
                self.A[t] = (tab[xl][:, None] * self.A[t][0] * tab[xr].conj())[None]
                return
        if g.control_register == "b":
            xl = xr = self.b[:, g.control]
        else:
            self._split(g.control)
            lab = self.label[:, g.control]
            xl, xr = lab // self.d, lab % self.d
        self.A[t] = tab[xl][:, :, None] * self.A[t] * tab[xr].conj()[:, None, :]

    def noise(self, g: Gate) -> None:
        self._channel(g.target)
        if self.on_control:
            if g.control_register == "b":
                self._b_noise(g.control)
            else:
                self._channel(g.control)

    def _channel(self, s: int) -> None:
        ch = self.ch
        a = self.A[s]
        if ch.kind is ChannelKind.CDPC:
            tr = np.trace(a, axis1=1, axis2=2)
            out = (1 - ch.p) * a + ch.p * tr[:, None, None] * np.eye(self.d) / self.d
        else:
            out = sum(np.einsum("ij,tjk,lk->til", m, a, m.conj()) for m in ch.operators)
        self.A[s] = out
        if self.label[0, s] >= 0:
            # re-split at once so a position stays labeled in every term or in none
            self.label[:, s] = -1
            self._split(s)

    def _take(self, idx: np.ndarray) -> None:
        self.w = self.w[idx]
        self.A = [a[idx] for a in self.A]
        self.label = self.label[idx]
        self.b = self.b[idx]

    def _check_size(self) -> None:
        if self.terms > self.max_terms:
            raise ResourceError(f"{self.terms} operator terms exceed the cap of {self.max_terms}")

    def _split(self, j: int) -> None:
        if self.w.size == 1:
            if self.label[0, j] >= 0:
                return
            nz = np.flatnonzero(np.abs(self.A[j][0]) * self.w[0] > PRUNE_TOL)
            if nz.size == 1:
                x, xp = divmod(int(nz[0]), self.d)
                unit = np.zeros((1, self.d, self.d), dtype=np.complex128)
                unit[0, x, xp] = self.A[j][0, x, xp]
                self.A[j] = unit
                self.label[0, j] = nz[0]
                return
        rows = np.flatnonzero(self.label[:, j] < 0)
        if rows.size == 0:
            return
        mats = self.A[j][rows]
        keep = np.abs(mats) * self.w[rows, None, None] > PRUNE_TOL
        ri, x, xp = np.nonzero(keep)
        src = rows[ri]
        units = np.zeros((ri.size, self.d, self.d), dtype=np.complex128)
        units[np.arange(ri.size), x, xp] = mats[ri, x, xp]
        stay = np.flatnonzero(self.label[:, j] >= 0)
        idx = np.concatenate([stay, src])
        self._take(idx)
        self.A[j] = np.concatenate([self.A[j][: stay.size], units])
        self.label[stay.size :, j] = x * self.d + xp
        self._check_size()

    def _b_noise(self, j: int) -> None:
        probs = self._btrans[self.b[:, j]]  # (T, d)
        ti, y = np.nonzero(probs * self.w[:, None] > PRUNE_TOL)
        w = self.w[ti] * probs[ti, y]
        self._take(ti)
        self.w = w
        self.b[:, j] = y
        self._check_size()

    # -- observables --------------------------------------------------------

    def fidelity(self, ref: Sequence[np.ndarray]) -> float:
        if self.terms == 1:
            f = self.w[0]
            for r, a in zip(ref, self.A):
                f = f * np.vdot(r, a[0])
            return float(np.real(f))
        acc = self.w.astype(np.complex128)
        for t in range(self.n):
            acc = acc * np.einsum("ij,tij->t", ref[t].conj(), self.A[t])
        return float(np.real(acc.sum()))

    def l1(self, cap: int) -> float:
        if self.terms == 1:
            return float(self.w[0] * math.prod(float(np.abs(a).sum()) for a in self.A) - 1.0)
        abs_sums = np.stack([np.abs(a).sum(axis=(1, 2)) for a in self.A])  # (n, T)
        # terms whose labels differ somewhere occupy disjoint matrix entries
        _, inv, counts = np.unique(self.label, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        single = counts[inv] == 1
        total = float(np.sum(self.w[single] * np.prod(abs_sums[:, single], axis=0)))
        for gidx in np.flatnonzero(counts > 1):
            members = np.flatnonzero(inv == gidx)
            lab = self.label[members[0]]
            free = [t for t in range(self.n) if lab[t] < 0]
            if self.d ** len(free) > cap:
                raise ResourceError("mixed term group too large for a dense coherence evaluation")
            coef = self.w[members].astype(np.complex128)
            for t in range(self.n):
                if lab[t] >= 0:
                    coef = coef * self.A[t][members, lab[t] // self.d, lab[t] % self.d]
            acc = coef[:, None, None]
            for t in reversed(free):
                a = self.A[t][members]
                k = acc.shape[1] * self.d
                acc = (acc[:, :, None, :, None] * a[:, None, :, None, :]).reshape(members.size, k, k)
            acc = acc.sum(axis=0)
            total += float(np.sum(np.abs(acc)))
        return total - 1.0

    def distribution(self, chunk: int = 1024) -> np.ndarray:
        diags = [np.real(np.diagonal(a, axis1=1, axis2=2)) for a in self.A]
        live = np.ones(self.terms, dtype=bool)
        for t in range(self.n):
            live &= np.abs(diags[t]).sum(axis=1) > 0
        rows = np.flatnonzero(live)
        D = self.d**self.n
        dist = np.zeros(D)
        for lo in range(0, rows.size, chunk):
            r = rows[lo : lo + chunk]
            m = self.w[r][:, None]
            for t in reversed(range(self.n)):
                m = (m[:, :, None] * diags[t][r][:, None, :]).reshape(r.size, -1)
            dist += m.sum(axis=0)
        return dist

    def prob_of(self, v: int) -> float:
        acc = self.w.copy()
        for t in range(self.n):
            x = (v // self.d**t) % self.d
            acc = acc * np.real(self.A[t][:, x, x])
        return float(acc.sum())

    def b_marginal(self) -> dict:
        tr = self.w.copy()
        for a in self.A:
            tr = tr * np.real(np.trace(a, axis1=1, axis2=2))
        out: dict = {}
        for row, p in zip(map(tuple, self.b.tolist()), tr):
            out[row] = out.get(row, 0.0) + float(p)
        return {k: v for k, v in out.items() if abs(v) > PRUNE_TOL}

    def snapshot(self) -> list[np.ndarray]:
        if self.terms != 1:
            raise BackendError("reference run did not stay a single product")
        return [a[0].copy() for a in self.A]

    def export(self, cap: int):
        """A :class:`RegisterState` when every term is a product of density
        matrices, otherwise the dense :class:`JointState`."""
        traces = [np.trace(a, axis1=1, axis2=2) for a in self.A]
        positive = all(np.all(np.abs(np.imag(tr)) < 1e-12) and np.all(np.real(tr) > 0) for tr in traces)
        if positive:
            branches = []
            for i in range(self.terms):
                w = self.w[i] * np.prod([np.real(tr[i]) for tr in traces])
                qs = tuple(QuditState.trusted(a[i] / np.real(tr[i])) for a, tr in zip(self.A, traces))
                branches.append(Branch(float(w), qs))
            return RegisterState(tuple(branches))
        D = self.d**self.n
        if D > cap:
            raise ResourceError(f"joint dimension {D} exceeds cap {cap}")
        rho = np.zeros((D, D), dtype=np.complex128)
        for i in range(self.terms):
            rho += self.w[i] * kron_all([a[i] for a in reversed(self.A)])
        return JointState.trusted(rho, self.d, self.n)


# ---------------------------------------------------------------------------
# joint engine


class _JointEngine:
    """Dense density matrix over the target register, plus the second addend
    as ``n`` extra qudits when its digits are exposed to noise."""

    def __init__(self, d: int, nt: int, a: Sequence[int], b: Sequence[int], noise: NoiseSpec, cap: int):
        self.d, self.nt = d, nt
        self.ch = noise.channel(d)
        self.quantum_b = noise.on_control and self.ch is not None
        self.N = 2 * nt if self.quantum_b else nt
        D = d**self.N
        if D > cap:
            raise ResourceError(f"joint dimension {D} exceeds cap {cap}")
        digits = list(a) + (list(b) if self.quantum_b else [])
        idx = sum(int(x) * d**s for s, x in enumerate(digits))
        self.rho = np.zeros((D, D), dtype=np.complex128)
        self.rho[idx, idx] = 1.0
        self.b = list(b)
        self.grid = digit_grid(d, self.N)
        self.h = hadamard_d(d)

    def _pos(self, g: Gate) -> int | None:
        if g.control_register == "a":
            return g.control
        return self.nt + g.control if self.quantum_b else None

    def apply(self, g: Gate) -> None:
        if not g.kind.is_rotation:
            u = self.h.conj().T if g.kind is GateKind.INVERSE_HADAMARD else self.h
            self.rho = apply_local(self.rho, [u], g.target, self.N, self.d)
            return
        c = self._pos(g)
        if c is None:
            ph = reduced_rotation_phases(self.d, g.order, self.b[g.control])[self.grid[:, g.target]]
        else:
            full = np.diag(controlled_rotation(self.d, g.order)).reshape(self.d, self.d)
            ph = full[self.grid[:, c], self.grid[:, g.target]]
        if g.kind.is_inverse:
            ph = ph.conj()
        self.rho = ph[:, None] * self.rho * ph.conj()[None, :]

    def noise(self, g: Gate) -> None:
        self._channel(g.target)
        if self.quantum_b:
            self._channel(self._pos(g))

    def _channel(self, s: int) -> None:
        ch = self.ch
        if ch.kind is ChannelKind.PDC:
            # diagonal Kraus operators: off-diagonal blocks in qudit s shrink by 1 - p
            col = self.grid[:, s]
            self.rho = self.rho * np.where(col[:, None] == col[None, :], 1.0, 1.0 - ch.p)
        elif ch.kind is ChannelKind.CDPC:
            red = partial_trace_qudit(self.rho, s, self.N, self.d)
            mixed = insert_qudit(red, np.eye(self.d) / self.d, s, self.N, self.d)
            self.rho = (1 - ch.p) * self.rho + ch.p * mixed
        else:
            self.rho = apply_local(self.rho, list(ch.operators), s, self.N, self.d)

    def reduced(self) -> np.ndarray:
        rho, N = self.rho, self.N
        while N > self.nt:
            rho = partial_trace_qudit(rho, N - 1, N, self.d)
            N -= 1
        return rho

    def fidelity(self, ref: np.ndarray) -> float:
        if ref.ndim == 1:
            return float(np.real(np.vdot(ref, self.reduced() @ ref)))
        return float(np.real(np.vdot(ref, self.reduced())))

    def l1(self, cap: int) -> float:
        r = self.reduced()
        return float(np.sum(np.abs(r)) - np.sum(np.abs(np.diag(r))))

    def distribution(self) -> np.ndarray:
        return np.real(np.diag(self.reduced())).copy()

    def b_marginal(self) -> dict:
        if not self.quantum_b:
            return {tuple(self.b): 1.0}
        rho = self.rho
        N = self.N
        for s in range(self.nt):
            rho = partial_trace_qudit(rho, 0, N, self.d)
            N -= 1
        probs = np.real(np.diag(rho))
        g = digit_grid(self.d, self.nt)
        return {tuple(int(x) for x in g[i]): float(p) for i, p in enumerate(probs) if abs(p) > PRUNE_TOL}

    def snapshot(self) -> np.ndarray:
        return self.reduced().copy()

    def export(self, cap: int) -> JointState:
        return JointState.trusted(self.reduced(), self.d, self.nt)


class _VectorEngine:
    """Noiseless state vector over the target register; reference runs of the
    joint backend."""

    def __init__(self, d: int, nt: int, a: Sequence[int], b: Sequence[int]):
        self.d, self.nt = d, nt
        self.psi = np.zeros(d**nt, dtype=np.complex128)
        self.psi[sum(int(x) * d**s for s, x in enumerate(a))] = 1.0
        self.b = list(b)
        self.grid = digit_grid(d, nt)
        self.h = hadamard_d(d)

    def apply(self, g: Gate) -> None:
        if not g.kind.is_rotation:
            u = self.h.conj().T if g.kind is GateKind.INVERSE_HADAMARD else self.h
            self.psi = apply_local_vector(self.psi, u, g.target, self.nt, self.d)
            return
        if g.control_register == "b":
            ph = reduced_rotation_phases(self.d, g.order, self.b[g.control])[self.grid[:, g.target]]
        else:
            full = np.diag(controlled_rotation(self.d, g.order)).reshape(self.d, self.d)
            ph = full[self.grid[:, g.control], self.grid[:, g.target]]
        self.psi = self.psi * (ph.conj() if g.kind.is_inverse else ph)

    def noise(self, g: Gate) -> None:
        raise BackendError("reference runs are noiseless")

    def snapshot(self) -> np.ndarray:
        # a state vector; the joint engine evaluates <psi|rho|psi> directly
        return self.psi.copy()


# ---------------------------------------------------------------------------
# drivers


def _ideal_noise() -> NoiseSpec:
    return NoiseSpec()


def _collect_refs(make_engine, cfg: AdderConfig, q: int, named: bool) -> dict:
    """Snapshots of a noiseless run at banding order ``q`` keyed by gate position."""
    refs: dict = {}
    stop = cfg.stop_after if q == cfg.n_target else min(cfg.stop_after, "sum", key=STAGES.index)
    stages = schedules_for(replace(cfg, q=q, noise=_ideal_noise(), stop_after=stop))
    eng = make_engine(_ideal_noise())

    def visit(label, stage, key):
        if key is not None:
            refs[key] = eng.snapshot()
        elif named:
            refs[label] = eng.snapshot()

    _walk(eng, stages, _ideal_noise(), visit)
    return refs


def _analytic_refs(cfg: AdderConfig) -> dict:
    d, nt = cfg.d, cfg.n_target
    s = cfg.expected
    return {
        "input": [_basis(x, d) for x in cfg.a_digits],
        "pre_sum": _fourier(cfg.a, d, nt),
        "post_sum": _fourier(s, d, nt),
        "final": [_basis(x, d) for x in encode_digits(s, d, nt)],
    }


def _simulate(cfg: AdderConfig, keep_states: bool) -> RunRecord:
    d, nt = cfg.d, cfg.n_target
    a, b = cfg.a_digits.digits, cfg.b_digits.digits
    joint = cfg.backend is Backend.JOINT

    def make_engine(noise: NoiseSpec):
        if joint and not noise.active:
            return _VectorEngine(d, nt, a, b)
        if joint:
            return _JointEngine(d, nt, a, b, noise, cfg.joint_cap)
        return _TermEngine(d, nt, a, b, noise, cfg.max_terms)

    banded = cfg.q < nt
    unbanded_refs: dict = {}
    banded_refs: dict = {}
    if joint:
        unbanded_refs = _collect_refs(make_engine, cfg, nt, named=True)
    else:
        unbanded_refs = dict(_analytic_refs(cfg))
        if cfg.trace:
            unbanded_refs.update(_collect_refs(make_engine, cfg, nt, named=False))
    if cfg.trace and banded:
        banded_refs = _collect_refs(make_engine, cfg, cfg.q, named=False)

    D = d**nt
    eng = _JointEngine(d, nt, a, b, cfg.noise, cfg.joint_cap) if joint else make_engine(cfg.noise)
    samples: list[MetricSample] = []
    states: dict = {}

    def visit(label, stage, key):
        if key is not None and not cfg.trace:
            return
        if key is None:
            ref = unbanded_refs[label]
        elif stage == "sum" and banded:
            ref = banded_refs[key]
        else:
            ref = unbanded_refs[key]
        c = max(eng.l1(cfg.joint_cap), 0.0)
        samples.append(MetricSample(label, c, c / (D - 1), eng.fidelity(ref), stage))
        if keep_states:
            states[label] = eng.export(cfg.joint_cap)

    stages = schedules_for(cfg)
    _walk(eng, stages, cfg.noise, visit)

    decoded = success = dist = None
    if cfg.stop_after == "iqft":
        if joint or D <= DIST_CAP:
            dist = eng.distribution()
            decoded = _argmax_smallest(dist)
            success = float(dist[cfg.expected])
        else:
            success = eng.prob_of(cfg.expected)
    return RunRecord(
        config=cfg,
        samples=tuple(samples),
        decoded=decoded,
        success_prob=success,
        gate_count=sum(len(s) for _, s in stages),
        depth=sum(s.depth for _, s in stages),
        distribution=dist,
        b_register=eng.b_marginal(),
        states=states,
        metadata={"terms": getattr(eng, "terms", None)},
    )


def _run_closed_form(cfg: AdderConfig) -> RunRecord:
    d, nt, q = cfg.d, cfg.n_target, cfg.q
    nz = cfg.noise
    p = nz.p if nz.active else 0.0
    b = cfg.b_digits
    D = d**nt
    c_pre, c_post, delta = [], [], []
    for t in range(nt):
        m = cf.rotations_on_target(q, t)
        e_pre = t if nz.after_qft_rotations else 0
        e_sum = m if nz.after_sum_rotations else 0
        c_pre.append((1 - p) ** e_pre)
        c_post.append((1 - p) ** (e_pre + e_sum))
        delta.append(cf.truncated_phase(b, d, t, m))

    def sample(label, stage, cs, ds):
        f = float(np.prod([cf.qudit_fidelity_factor(d, c, x) for c, x in zip(cs, ds)]))
        c = cf.closed_form_coherence(d, nt, cs)
        return MetricSample(label, c, c / (D - 1), f, stage)

    samples = [
        MetricSample("input", 0.0, 0.0, 1.0, "input"),
        sample("pre_sum", "qft", c_pre, [0.0] * nt),
    ]
    stages = ["qft"]
    if cfg.stop_after != "qft":
        samples.append(sample("post_sum", "sum", c_post, delta))
        stages.append("sum")
    decoded = success = dist = None
    if cfg.stop_after == "iqft":
        stages.append("iqft")
        success = samples[-1].fidelity
        if D <= DIST_CAP:
            x = np.arange(D)
            dist = np.ones(D)
            # phase actually written on qudit t: a plus the kept b rotations
            for t in range(nt):
                mod = d ** (t + 1)
                theta = 2 * math.pi * ((cfg.a % mod) / mod)
                m = cf.rotations_on_target(q, t)
                theta += sum(2 * math.pi * b[j] / d ** (t - j + 1) for j in range(t - m + 1, t + 1))
                dist *= cf.qudit_fidelity_factor(d, c_post[t], theta - 2 * math.pi * (x % mod) / mod)
            decoded = _argmax_smallest(dist)
    scheds = schedules_for(cfg)
    return RunRecord(
        config=cfg,
        samples=tuple(samples),
        decoded=decoded,
        success_prob=success,
        gate_count=sum(len(s) for _, s in scheds),
        depth=sum(s.depth for _, s in scheds),
        distribution=dist,
        b_register={tuple(b.digits): 1.0},
    )


def run_adder(cfg: AdderConfig, keep_states: bool = False) -> RunRecord:
    """Run the encode / add / decode circuit described by ``cfg``.

    With ``cfg.trace`` a sample follows every gate; the named checkpoints
    ``input``, ``pre_sum``, ``post_sum`` and ``final`` are always present.
    Fidelity references are noiseless runs: unbanded for encoding, decoding
    and the named checkpoints, and at the same banding order for gates inside
    the SUM stage.
    """
    if cfg.backend is Backend.CLOSED_FORM:
        return _run_closed_form(cfg)
    return _simulate(cfg, keep_states)


def decode_measure(state) -> tuple[int, float, np.ndarray]:
    """Measure every qudit in the computational basis.

    Returns ``(argmax, P(argmax), distribution)``; ties go to the smaller
    integer.  Accepts a :class:`RegisterState` or :class:`JointState`.
    """
    if isinstance(state, JointState):
        dist = np.real(np.diag(state.rho)).copy()
    elif isinstance(state, RegisterState):
        D = state.d**state.n
        if D > DIST_CAP:
            raise ResourceError(f"distribution over {D} outcomes exceeds the cap")
        dist = np.zeros(D)
        for w, qudits in state.branches:
            m = np.array([w])
            for qs in reversed(qudits):
                m = np.multiply.outer(m, np.real(np.diag(qs.rho))).ravel()
            dist += m
    else:
        raise DomainError("expected a RegisterState or JointState")
    k = _argmax_smallest(dist)
    return k, float(dist[k]), dist
