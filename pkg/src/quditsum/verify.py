"""Self-check suite behind ``quditsum verify``.

Each check returns ``(ok, detail)``.  ``quick`` shrinks every grid so the
whole suite runs in a few seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adder import AdderConfig, Backend, run_adder
from .banding import closed_form_worst, geometric_tail_holds, min_banding_order
from .channels import ChannelKind, NoiseSpec, max_strength
from .closed_form import closed_form_banded_pdc_fidelity, closed_form_pdc_fidelity
from .digits import worst_digits
from .gates import controlled_rotation, hadamard_d
from .metrics import coherence_from_fidelity, flatten_phases, l1_coherence
from .spin_chain import (
    controlled_rotation_hamiltonian,
    evolve,
    gate_adder_state,
    hadamard_hamiltonian,
    phase_aligned_distance,
    run_spin_adder,
)
from .tensor import ContractError


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        return f"{tag} {self.name}: {self.detail}"


def _grid(quick: bool, dmax_full: int = 4, dn_cap: int = 64):
    ds = (2, 3) if quick else tuple(range(2, dmax_full + 1))
    for d in ds:
        n = 1
        while d**n <= (16 if quick else dn_cap):
            yield d, n
            n += 1


def check_exact_adder(quick: bool) -> tuple[bool, str]:
    runs = 0
    for d, n in _grid(quick, dn_cap=64):
        D = d**n
        for a in range(D):
            for b in range(D):
                r = run_adder(AdderConfig(d, n, a, b, trace=False))
                runs += 1
                if r.decoded != (a + b) % D or r.success_prob < 1 - 1e-9:
                    return False, f"{a}+{b} (d={d}, n={n}) decoded {r.decoded} with P={r.success_prob:.6g}"
    return True, f"{runs} runs exact"


def check_closed_forms(quick: bool) -> tuple[bool, str]:
    worst = 0.0
    for d, n in _grid(quick, dn_cap=256):
        for p in (0.0, 0.1) if quick else (0.0, 0.05, 0.1, 0.3):
            noise = NoiseSpec(ChannelKind.PDC, p)
            for q in range(1, n + 1):
                b = worst_digits(d, n)
                r = run_adder(AdderConfig(d, n, 0, b.value, q, noise, trace=False, stop_after="sum"))
                post = r.sample("post_sum").fidelity
                worst = max(worst, abs(post - closed_form_banded_pdc_fidelity(b, d, n, q, p)))
                worst = max(worst, abs(post - closed_form_worst(d, n, q, p)))
                if q == n:
                    worst = max(worst, abs(post - closed_form_pdc_fidelity(d, n, p, "out")))
                    worst = max(worst, abs(r.sample("pre_sum").fidelity - closed_form_pdc_fidelity(d, n, p, "in")))
    return worst <= 1e-10, f"max deviation {worst:.3g}"


def check_backends(quick: bool) -> tuple[bool, str]:
    worst = 0.0
    for d, n in _grid(quick, dn_cap=16 if quick else 64):
        for kind in (ChannelKind.PDC, ChannelKind.ADC, ChannelKind.CDPC):
            p = min(0.3, max_strength(kind, d))
            for q in sorted({1, n}):
                b = d**n - 1
                rs = [
                    run_adder(AdderConfig(d, n, 1 % d**n, b, q, NoiseSpec(kind, p), backend))
                    for backend in (Backend.PRODUCT, Backend.JOINT)
                ]
                for s0, s1 in zip(rs[0].samples, rs[1].samples):
                    worst = max(worst, abs(s0.fidelity - s1.fidelity), abs(s0.c_l1 - s1.c_l1))
    return worst <= 1e-9, f"max product/joint gap {worst:.3g}"


def check_bound(quick: bool) -> tuple[bool, str]:
    ds = (2, 3) if quick else (2, 3, 4, 5)
    ns = range(2, 12 if quick else 31)
    for d in ds:
        if not geometric_tail_holds(d, 1.0):
            return False, f"geometric tail inequality fails for d={d}"
        for n in ns:
            for eps in (0.1, 0.01, 0.001):
                q = min_banding_order(d, n, eps)
                if q <= n and closed_form_worst(d, n, q, 0.0) < 1 - eps:
                    return False, f"d={d}, n={n}, eps={eps}: q={q} misses 1-eps"
    return True, "bound guarantees 1-eps on the grid"


def check_flatten(quick: bool) -> tuple[bool, str]:
    count = 0
    worst = 0.0
    for d, n in _grid(quick, dn_cap=16 if quick else 64):
        for kind in (ChannelKind.PDC, ChannelKind.ADC):
            cfg = AdderConfig(d, n, 1 % d**n, d**n - 1, max(1, n - 1), NoiseSpec(kind, 0.1), Backend.JOINT)
            rec = run_adder(cfg, keep_states=True)
            stage = {s.label: s.stage for s in rec.samples}
            for label, st in rec.states.items():
                if stage[label] == "iqft":
                    continue
                try:
                    _, flat = flatten_phases(st)
                except ContractError:
                    return False, f"{label} of {cfg.as_dict()} is not of circuit form"
                worst = max(worst, abs(l1_coherence(flat) - l1_coherence(st)))
                count += 1
    return worst <= 1e-12, f"{count} states, max l1 change {worst:.3g}"


def check_coherence_laws(quick: bool) -> tuple[bool, str]:
    worst = 0.0
    for d, n in _grid(quick, dn_cap=256):
        D = d**n
        for kind in (ChannelKind.PDC, ChannelKind.CDPC):
            rec = run_adder(AdderConfig(d, n, 0, D - 1, None, NoiseSpec(kind, 0.1), trace=False, stop_after="sum"))
            pre, post = rec.sample("pre_sum"), rec.sample("post_sum")
            for s in (pre, post):
                worst = max(worst, abs(s.c_l1_norm - coherence_from_fidelity(s.fidelity, D)))
            worst = max(worst, abs((pre.fidelity - post.fidelity) - (pre.c_l1 - post.c_l1) / D))
    return worst <= 1e-10, f"max deviation {worst:.3g}"


def check_depolarizing(quick: bool) -> tuple[bool, str]:
    worst = 0.0
    for d, n in _grid(quick, dn_cap=16 if quick else 64):
        states = []
        for kind in (ChannelKind.PDC, ChannelKind.CDPC):
            rec = run_adder(AdderConfig(d, n, 0, d**n - 1, None, NoiseSpec(kind, 0.2), Backend.JOINT, stop_after="sum"), True)
            states.append(rec.states)
        for label, st in states[0].items():
            worst = max(worst, float(np.max(np.abs(st.rho - states[1][label].rho))))
    return worst <= 1e-12, f"max entry gap {worst:.3g}"


def check_spin(quick: bool) -> tuple[bool, str]:
    h = evolve(hadamard_hamiltonian(), 1.0)
    gap = phase_aligned_distance(h, hadamard_d(2))
    if gap > 1e-10:
        return False, f"evolved field misses the Hadamard by {gap:.3g}"
    for q in range(1, 5):
        for s in range(4):
            u = evolve(controlled_rotation_hamiltonian(q), 2**q * s + 1)
            if np.max(np.abs(u - controlled_rotation(2, q))) > 1e-10:
                return False, f"coupling q={q} misses its revival at s={s}"
    n_max = 2 if quick else 4
    pairs = 0
    for n in range(1, n_max + 1):
        for a in range(2**n):
            for b in range(2**n):
                for tau in (1.0, 1.0 + 2**n):
                    spin = run_spin_adder(a, b, n, tau).final_state
                    if phase_aligned_distance(spin, gate_adder_state(a, b, n)) > 1e-9:
                        return False, f"spin adder {a}+{b} (n={n}) off at tau={tau:g}"
                pairs += 1
    return True, f"gate revivals exact; {pairs} spin adder inputs reproduced"


CHECKS: tuple[tuple[str, Callable[[bool], tuple[bool, str]]], ...] = (
    ("exact-adder", check_exact_adder),
    ("closed-form-oracles", check_closed_forms),
    ("backend-equivalence", check_backends),
    ("bound-soundness", check_bound),
    ("phase-flattening", check_flatten),
    ("coherence-fidelity-laws", check_coherence_laws),
    ("depolarizing-equivalence", check_depolarizing),
    ("spin-revival", check_spin),
)


def run_checks(quick: bool = False) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(quick)
        except Exception as exc:  # a crash is a failed invariant, reported by name
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append(CheckResult(name, ok, detail, time.perf_counter() - t0))
    return out
