"""Pilot allocation: how much of the budget n goes to the first stage.

The first stage buys regression accuracy, the second buys low-variance
draws.  Balancing the two error sources gives m of order n^(2/3) for
parametric fits and (n / log n)^((d+4)/(d+6)) for kernel fits; the
constants default to the values used throughout the experiment harness
(2 and 6 respectively).
"""

import math
from dataclasses import dataclass

from .validation import check_positive

__all__ = [
    "AllocationPolicy",
    "parametric_allocation",
    "nonparametric_allocation",
]


def _clamp_m(raw: float, n: int) -> int:
    return int(min(max(math.ceil(raw), 1), n - 1))


def parametric_allocation(n: int, c: float = 2.0) -> int:
    """Pilot size ceil(c * n^(2/3)), clamped into [1, n-1]."""
    n = int(n)
    if n < 4:
        raise ValueError("total budget n must be at least 4")
    check_positive(c, "c")
    return _clamp_m(c * n ** (2.0 / 3.0), n)


def nonparametric_allocation(n: int, d: int, c: float = 6.0) -> int:
    """Pilot size ceil(c * (n / ln n)^((d+4)/(d+6))), clamped into [1, n-1]."""
    n = int(n)
    if n < 4:
        raise ValueError("total budget n must be at least 4")
    if d < 1:
        raise ValueError("dimension d must be at least 1")
    check_positive(c, "c")
    exponent = (d + 4.0) / (d + 6.0)
    return _clamp_m(c * (n / math.log(n)) ** exponent, n)


@dataclass(frozen=True)
class AllocationPolicy:
    """Named allocation rule: ``parametric``, ``nonparametric`` or ``fixed``."""

    kind: str = "parametric"
    c: float = 2.0
    fixed_m: int | None = None

    def __post_init__(self):
        if self.kind not in ("parametric", "nonparametric", "fixed"):
            raise ValueError(f"unknown allocation kind {self.kind!r}")
        if self.kind == "fixed" and (self.fixed_m is None or self.fixed_m < 1):
            raise ValueError("fixed allocation requires fixed_m >= 1")
        if self.kind != "fixed":
            check_positive(self.c, "c")

    def allocate(self, n: int, d: int = 1) -> int:
        if self.kind == "parametric":
            return parametric_allocation(n, self.c)
        if self.kind == "nonparametric":
            return nonparametric_allocation(n, d, self.c)
        return int(min(self.fixed_m, n - 1))

    @classmethod
    def for_sampler(cls, sampler: str, parametric_c: float = 2.0,
                    nonparametric_c: float = 6.0) -> "AllocationPolicy":
        """Default policy for a sampler kind."""
        if sampler == "nonparam":
            return cls("nonparametric", nonparametric_c)
        return cls("parametric", parametric_c)
