"""Deterministic compensated accumulation over branch pools.

Mixture coefficients are signed, so reductions over them cancel; ordinary
left-to-right addition loses the result long before the branch count gets
interesting. Two accumulation modes are offered:

* ``fsum``: exact round-to-nearest summation (Shewchuk partials) per chunk.
* ``dd``: running double-double (error-free transformation) accumulator, a
  software stand-in for wider hardware floats.

Arrays are always reduced chunk by chunk in fixed chunk order: workers may
compute chunk partials concurrently, but the final combine walks chunks in
index order, so the result is bit-identical for a given chunk size no matter
how many workers ran. The chunk size is part of the reproducibility contract,
the worker count is not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_PRECISIONS = ("fsum", "dd")


@dataclass(frozen=True)
class Execution:
    """How reductions and branch updates are scheduled.

    Attributes
    ----------
    workers : int
        Worker threads per measurement step. Results do not depend on it.
    chunk_size : int
        Branches per chunk. Results DO depend on it (it fixes the partial
        sum boundaries); it defaults to a constant rather than to anything
        machine-derived.
    precision : str
        "fsum" or "dd".
    """

    workers: int = 1
    chunk_size: int = 4096
    precision: str = "fsum"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1, got %d" % self.workers)
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1, got %d" % self.chunk_size)
        if self.precision not in _PRECISIONS:
            raise ValueError(
                "precision must be one of %r, got %r" % (_PRECISIONS, self.precision)
            )


def chunk_bounds(n, chunk_size):
    """Split range(n) into contiguous (lo, hi) chunks; the last may be short."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return tuple(
        (lo, min(lo + chunk_size, n)) for lo in range(0, max(n, 0), chunk_size)
    )


def _two_sum(a, b):
    # Error-free transformation: a + b = s + e exactly.
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def partial_sum(values, precision="fsum"):
    """Reduce one chunk of values to a partial.

    Returns a float for "fsum" and an (hi, lo) pair for "dd". Partials from
    different chunks are merged by :func:`combine`.
    """
    data = values.tolist() if hasattr(values, "tolist") else list(values)
    if precision == "fsum":
        return math.fsum(data)
    if precision == "dd":
        hi = 0.0
        lo = 0.0
        for x in data:
            s, e = _two_sum(hi, x)
            lo += e
            hi, lo = _two_sum(s, lo)
        return hi, lo
    raise ValueError("unknown precision %r" % (precision,))


def combine(partials, precision="fsum"):
    """Merge chunk partials, in the order given, to a final float."""
    if precision == "fsum":
        return math.fsum(partials)
    if precision == "dd":
        hi = 0.0
        lo = 0.0
        for phi, plo in partials:
            for x in (phi, plo):
                s, e = _two_sum(hi, x)
                lo += e
                hi, lo = _two_sum(s, lo)
        return hi + lo
    raise ValueError("unknown precision %r" % (precision,))


def chunked_sum(values, execution=None):
    """Sum a 1-D array under an Execution policy (serial convenience)."""
    ex = execution if execution is not None else Execution()
    bounds = chunk_bounds(len(values), ex.chunk_size)
    parts = [partial_sum(values[lo:hi], ex.precision) for lo, hi in bounds]
    return combine(parts, ex.precision)
