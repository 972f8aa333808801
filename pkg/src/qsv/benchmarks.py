"""Closed-form spectral gaps of specialized Dicke and W-state protocols, used as reference curves."""

from __future__ import annotations

import math


def dicke_gap(partition) -> float:
    """Gap of the specialized Dicke protocol for a symbol-count partition."""
    part = tuple(int(x) for x in partition)
    if len(part) < 2 or any(x < 1 for x in part) or any(a < b for a, b in zip(part, part[1:])):
        raise ValueError(f"invalid partition {part}: need at least two nonincreasing positive parts")
    n = sum(part)
    if part == (1, 1, 1):
        return 0.5
    if part == (2, 1):
        return 1 / 3
    if n >= 4:
        return 1 / (n - 1)
    raise ValueError(f"invalid partition {part}: no closed form for n = {n}")


def h(n: int) -> float:
    """Average of 1/(1 + (n - 2k)**2) over a binomial(n, 1/2) count k."""
    if n < 0:
        raise ValueError("h(n) needs n >= 0")
    return sum(math.comb(n, k) / (1 + (n - 2 * k) ** 2) for k in range(n + 1)) / 2**n


def w_protocol_a(n: int) -> float:
    if n < 3:
        raise ValueError("protocol A is defined for n >= 3")
    if n == 3:
        return 0.5 - 1 / math.sqrt(10)
    return (1 - math.sqrt(1 - h(n - 3))) / 2


def w_protocol_g(n: int) -> float:
    if n < 2:
        raise ValueError("protocol G is defined for n >= 2")
    x = (n - 2) * h(n - 1)
    return (1 + x) / (n + x)


def benchmark_gap(which: str, *, partition=None, n=None) -> float:
    """Dispatch by name: ``dicke`` (needs ``partition``), ``w-A`` or ``w-G`` (need ``n``)."""
    if which == "dicke":
        if partition is None:
            raise ValueError("dicke benchmark needs a partition")
        return dicke_gap(partition)
    if n is None:
        raise ValueError(f"{which} benchmark needs n")
    if which in ("w-A", "w_protocol_A"):
        return w_protocol_a(n)
    if which in ("w-G", "w_protocol_G"):
        return w_protocol_g(n)
    raise ValueError(f"unknown benchmark {which!r}")
