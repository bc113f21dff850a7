"""Banding-order bounds and the search for the best banding order under noise."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .adder import AdderConfig, Backend, run_adder
from .channels import ChannelKind, NoiseSpec, max_strength
from .closed_form import closed_form_banded_fidelity, closed_form_banded_pdc_fidelity, closed_form_worst
from .digits import DigitString, as_digits, worst_digits
from .tensor import DomainError

# relative slack when comparing fidelities for ties
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class BandingBoundQuery:
    d: int
    n: int
    epsilon: float

    def __post_init__(self):
        if self.d < 2:
            raise DomainError("d must be at least 2")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon {self.epsilon} outside (0, 1)")


def banding_bound(d: int, n: int, epsilon: float) -> float:
    """Real-valued order ``(1/2) log_d((n-1)(d^2-1) pi^2 / (3 eps))``."""
    BandingBoundQuery(d, n, epsilon)
    if n == 1:
        return 0.0
    x = (n - 1) * (d * d - 1) * math.pi**2 / (3 * epsilon)
    return 0.5 * math.log(x) / math.log(d)


def min_banding_order(query: BandingBoundQuery | int, n: int | None = None, epsilon: float | None = None) -> int:
    """Smallest order guaranteed by the bound; not capped at ``n``.

    Accepts a :class:`BandingBoundQuery` or ``(d, n, epsilon)``.
    """
    if not isinstance(query, BandingBoundQuery):
        query = BandingBoundQuery(query, n, epsilon)
    if query.n == 1:
        return 1
    return max(1, math.ceil(banding_bound(query.d, query.n, query.epsilon)))


def geometric_tail_holds(d: int, x: float, terms: int = 64) -> bool:
    """Check ``sum_j x (d-1)(d-r)/d**j <= (d-r) x`` for every ``r`` (``j >= 1``)."""
    for r in range(1, d):
        s = sum(x * (d - 1) * (d - r) / d**j for j in range(1, terms + 1))
        if s > (d - r) * x * (1 + 1e-15):
            return False
    return True


def _policy_digits(policy, d: int, n: int) -> DigitString | None:
    """Resolve an input policy; ``None`` stands for the worst input.

    Policies: ``"worst"``, ``"digit:K"`` (every digit equal to ``K``), or an
    explicit digit sequence.
    """
    if policy is None or policy == "worst":
        return None
    if isinstance(policy, str):
        if policy.startswith("digit:"):
            return DigitString((int(policy[6:]),) * n, d)
        raise DomainError(f"unknown input policy {policy!r}")
    return as_digits(policy, d, n)


def fidelity_at(d: int, n: int, q: int, p: float, channel="pdc", policy="worst") -> float:
    """Post-SUM fidelity of the banded adder at order ``q``.

    Dephasing and depolarization use closed forms; amplitude damping runs the
    product simulator through the SUM stage.
    """
    kind = ChannelKind.parse(channel)
    digits = _policy_digits(policy, d, n)
    if kind is ChannelKind.ADC and p > 0:
        b = digits if digits is not None else worst_digits(d, n)
        cfg = AdderConfig(d, n, 0, b.value, q, NoiseSpec(kind, p), Backend.PRODUCT, trace=False, stop_after="sum")
        return run_adder(cfg).sample("post_sum").fidelity
    if kind is ChannelKind.NONE:
        p = 0.0
    if digits is None:
        return closed_form_worst(d, n, q, p)
    return closed_form_banded_pdc_fidelity(digits, d, n, q, p)


@dataclass(frozen=True)
class QBestCell:
    d: int
    n: int
    p: float
    q_best: int
    f_max: float
    channel: str = "pdc"

    def as_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "p": self.p, "channel": self.channel, "q_best": self.q_best, "f_max": self.f_max}


def best_of(curve: Sequence[float]) -> tuple[int, float]:
    """``(q, f)`` at the maximum of ``curve`` (``curve[0]`` is ``q = 1``); ties go to smaller ``q``."""
    top = max(curve)
    for i, f in enumerate(curve):
        if f >= top - TIE_RTOL * abs(top):
            return i + 1, f
    raise AssertionError("unreachable")


def qbest_search(d: int, n: int, p: float, channel="pdc", policy="worst") -> QBestCell:
    """Exhaustive scan of ``q = 1 .. n``."""
    kind = ChannelKind.parse(channel)
    if p > max_strength(kind, d) + 1e-15:
        raise DomainError(f"p={p} outside the {kind.value} domain for d={d}")
    curve = [fidelity_at(d, n, q, p, kind, policy) for q in range(1, n + 1)]
    q, f = best_of(curve)
    return QBestCell(d, n, p, q, f, kind.value)


@dataclass(frozen=True)
class SweepGrid:
    ds: tuple[int, ...]
    ns: tuple[int, ...]
    ps: tuple[float, ...]
    channel: str = "pdc"
    policy: object = "worst"

    def __post_init__(self):
        object.__setattr__(self, "ds", tuple(self.ds))
        object.__setattr__(self, "ns", tuple(self.ns))
        object.__setattr__(self, "ps", tuple(self.ps))
        if not (self.ds and self.ns and self.ps):
            raise DomainError("every sweep axis needs at least one value")
        kind = ChannelKind.parse(self.channel)
        object.__setattr__(self, "channel", kind.value)
        if any(p < 0 or p > 1 for p in self.ps):
            raise DomainError("p values must lie in [0, 1]")
        if not self.points():
            raise DomainError(f"no p value lies in the {kind.value} domain for any d")

    def in_domain(self, d: int, p: float) -> bool:
        return p <= max_strength(ChannelKind.parse(self.channel), d) + 1e-15

    def points(self) -> list[tuple[int, int, float]]:
        """Grid order: ``d`` outermost, then ``n``, then ``p``.

        Strengths beyond the channel's domain for a given ``d`` (amplitude
        damping above ``1/(d-1)``) are left out.
        """
        return [(d, n, p) for d in self.ds for n in self.ns for p in self.ps if self.in_domain(d, p)]

    def skipped(self) -> list[tuple[int, float]]:
        return [(d, p) for d in self.ds for p in self.ps if not self.in_domain(d, p)]


def _cell(args) -> QBestCell:
    d, n, p, channel, policy = args
    return qbest_search(d, n, p, channel, policy)


def qbest_map(grid: SweepGrid, jobs: int = 1) -> list[QBestCell]:
    """One cell per grid point, in :meth:`SweepGrid.points` order for any ``jobs``."""
    work = [(d, n, p, grid.channel, grid.policy) for d, n, p in grid.points()]
    if jobs <= 1 or len(work) < 2:
        return [_cell(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell, work, chunksize=max(1, len(work) // (4 * jobs))))


@dataclass(frozen=True)
class Saturation:
    d: int
    p: float
    channel: str
    n0: int
    q_best: int


def saturation(cells: Iterable[QBestCell]) -> list[Saturation]:
    """Per ``(d, p, channel)``: the smallest scanned ``n0`` after which ``q_best`` stays constant."""
    rows: dict = {}
    for c in cells:
        rows.setdefault((c.d, c.p, c.channel), []).append((c.n, c.q_best))
    out = []
    for (d, p, ch), pts in rows.items():
        pts.sort()
        last = pts[-1][1]
        n0 = pts[-1][0]
        for n, q in reversed(pts):
            if q != last:
                break
            n0 = n
        out.append(Saturation(d, p, ch, n0, last))
    return out


def noiseless_banding_curve(d: int, n: int, policy="worst") -> list[tuple[int, float]]:
    """Noiseless post-SUM fidelity for each ``q = 1 .. n``."""
    digits = _policy_digits(policy, d, n)
    if digits is None:
        return [(q, closed_form_worst(d, n, q, 0.0)) for q in range(1, n + 1)]
    return [(q, closed_form_banded_fidelity(digits, d, n, q)) for q in range(1, n + 1)]


def saturation_order(curve: Sequence[tuple[int, float]], epsilon: float) -> int:
    """First ``q`` whose fidelity reaches ``1 - epsilon``."""
    for q, f in curve:
        if f >= 1 - epsilon:
            return q
    return curve[-1][0]
