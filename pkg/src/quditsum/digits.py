"""Base-``d`` digit strings, least-significant digit first."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .tensor import DomainError


@dataclass(frozen=True)
class DigitString:
    digits: tuple[int, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(x) for x in self.digits))
        if self.d < 2:
            raise DomainError("d must be at least 2")
        if any(not 0 <= x < self.d for x in self.digits):
            raise DomainError(f"digits {self.digits} not all in [0, {self.d - 1}]")

    @property
    def value(self) -> int:
        return sum(x * self.d**i for i, x in enumerate(self.digits))

    def __len__(self):
        return len(self.digits)

    def __iter__(self):
        return iter(self.digits)

    def __getitem__(self, i):
        return self.digits[i]

    def padded(self, n: int) -> "DigitString":
        if n < len(self.digits):
            raise DomainError("cannot pad to a shorter length")
        return DigitString(self.digits + (0,) * (n - len(self.digits)), self.d)


def encode_digits(v: int, d: int, n: int) -> DigitString:
    """Digits of ``v`` in base ``d`` over ``n`` positions."""
    if d < 2:
        raise DomainError("d must be at least 2")
    if n < 1 or not 0 <= v < d**n:
        raise DomainError(f"{v} is not representable with {n} base-{d} digits")
    return DigitString(tuple((v // d**i) % d for i in range(n)), d)


def as_digits(b, d: int, n: int) -> DigitString:
    """Accept an integer, a digit sequence or a :class:`DigitString`."""
    if isinstance(b, DigitString):
        if b.d != d:
            raise DomainError("digit string has a different base")
        return b.padded(n) if len(b) < n else b
    if isinstance(b, Sequence):
        if len(b) != n:
            raise DomainError(f"expected {n} digits, got {len(b)}")
        return DigitString(tuple(b), d)
    return encode_digits(int(b), d, n)


def worst_digits(d: int, n: int) -> DigitString:
    """All digits ``d - 1``: the input with the largest banding error."""
    return DigitString((d - 1,) * n, d)
