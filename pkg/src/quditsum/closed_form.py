"""Closed-form fidelities and coherences of the (banded, dephased) adder.

Every function here evaluates a formula directly; the simulators in
:mod:`quditsum.adder` serve as their oracles.
"""

from __future__ import annotations

import math

import numpy as np

from .channels import element_scaling_adc
from .digits import as_digits
from .tensor import DomainError


def rotations_on_target(q: int, t: int) -> int:
    """``m(q, t) = min(q, t + 1)``: SUM rotations received by target ``t``."""
    return min(q, t + 1)


def truncated_phase(b, d: int, t: int, m: int) -> float:
    """Phase the banded SUM leaves out on target ``t``.

    The dropped rotations are controlled by ``b[0] .. b[t-m]``; together they
    would add ``2 pi * (sum_j b_j d**j) / d**(t+1)`` over ``j <= t - m``.
    """
    low = sum(int(b[j]) * d**j for j in range(0, t - m + 1))
    return 2 * math.pi * (low / d ** (t + 1))


def qudit_fidelity_factor(d: int, c: float, delta) -> float | np.ndarray:
    """Single-qudit overlap ``(1/d)(1 + c (1/d) sum_k 2k cos(delta (d - k)))``.

    ``c`` scales every off-diagonal entry and ``delta`` is the phase error of
    the qudit relative to the ideal Fourier state.
    """
    delta = np.asarray(delta, dtype=float)
    k = np.arange(d).reshape((-1,) + (1,) * delta.ndim)
    s = np.sum(2 * k * np.cos(delta * (d - k)), axis=0)
    out = (1 + c * s / d) / d
    return float(out) if out.ndim == 0 else out


def _check_q(n: int, q: int) -> None:
    if not 1 <= q <= n:
        raise DomainError(f"banding order {q} outside 1..{n}")


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"noise strength {p} outside [0, 1]")


def closed_form_banded_fidelity(b, d: int, n: int, q: int) -> float:
    """Noiseless fidelity of the banded SUM output against the exact one.

    Independent of the first addend.
    """
    _check_q(n, q)
    b = as_digits(b, d, n)
    f = 1.0
    for t in range(n):
        m = rotations_on_target(q, t)
        f *= qudit_fidelity_factor(d, 1.0, truncated_phase(b, d, t, m))
    return f


def closed_form_pdc_fidelity(d: int, n: int, p: float, stage: str) -> float:
    """Fidelity before (``"in"``) or after (``"out"``) the unbanded SUM under phase damping.

    ``f_in = prod_t (1 + (d-1)(1-p)**t)/d`` and
    ``f_out = prod_t (1 + (d-1)(1-p)**(2t+1))/d``.
    """
    _check_p(p)
    if stage not in ("in", "out"):
        raise DomainError("stage must be 'in' or 'out'")
    f = 1.0
    for t in range(n):
        e = t if stage == "in" else 2 * t + 1
        f *= (1 + (d - 1) * (1 - p) ** e) / d
    return f


def closed_form_banded_pdc_fidelity(b, d: int, n: int, q: int, p: float) -> float:
    """Post-SUM fidelity with both banding and phase damping.

    Target ``t`` carries ``t + m(q, t)`` damping exposures.
    """
    _check_q(n, q)
    _check_p(p)
    b = as_digits(b, d, n)
    f = 1.0
    for t in range(n):
        m = rotations_on_target(q, t)
        f *= qudit_fidelity_factor(d, (1 - p) ** (t + m), truncated_phase(b, d, t, m))
    return f


def closed_form_worst(d: int, n: int, q: int, p: float = 0.0) -> float:
    """Worst-input (all digits ``d - 1``) post-SUM fidelity, written as two products.

    Targets below ``q`` are exact and only dephased; the rest accumulate the
    geometric truncation phase ``sum_c 2 pi (d-1) / d**(q+c)``.
    """
    _check_q(n, q)
    _check_p(p)
    f = 1.0
    for i in range(q):
        f *= (1 + (d - 1) * (1 - p) ** (2 * i + 1)) / d
    r = np.arange(1, d)
    for i in range(q, n):
        angle = sum(2 * math.pi * (d - 1) / d ** (q + c) for c in range(1, i - q + 2))
        s = np.sum(2 * r * np.cos(angle * (d - r)))
        f *= (1 + (1 - p) ** (q + i) * s / d) / d
    return float(f)


def closed_form_coherence(d: int, n: int, exposures) -> float:
    """l1 coherence of ``prod_t`` flat-magnitude qudits with ``(1-p)**e_t`` off-diagonals.

    ``exposures`` is a sequence of per-qudit scale factors ``c_t``.
    """
    return float(np.prod([1 + (d - 1) * c for c in exposures]) - 1)


def fixed_value_qudits(v: int, d: int) -> int:
    """``ceil(log_d v)`` in exact integer arithmetic (at least one qudit)."""
    if v < 1:
        raise DomainError("value must be >= 1")
    n = 0
    while d**n < v:
        n += 1
    return max(n, 1)


def dimension_fixed_value_fidelity(v: int, d: int, p: float, inclusive_upper: bool = False) -> float:
    """Output fidelity for the smallest register holding ``v`` in base ``d``.

    With ``inclusive_upper`` the product runs over ``t = 0 .. ceil(log_d v)``,
    i.e. one extra factor; the default uses ``ceil(log_d v)`` factors.
    """
    _check_p(p)
    n = fixed_value_qudits(v, d) + (1 if inclusive_upper else 0)
    return closed_form_pdc_fidelity(d, n, p, "out")


def adc_scaling_estimate(b, d: int, n: int, q: int, p: float) -> float:
    """Post-SUM fidelity under amplitude damping, iterating the element scaling.

    Approximate: the single-exposure scaling is exact only on the first
    exposure of a Hadamard-produced state.  Used to quantify that gap against
    full Kraus simulation.
    """
    _check_q(n, q)
    b = as_digits(b, d, n)
    s = element_scaling_adc(d, p)
    k = np.arange(d)
    diff = np.subtract.outer(k, k)
    f = 1.0
    for t in range(n):
        m = rotations_on_target(q, t)
        delta = truncated_phase(b, d, t, m)
        mags = s ** (t + m) / d
        f *= float(np.real(np.sum(mags * np.exp(-1j * delta * diff)))) / d
    return f
