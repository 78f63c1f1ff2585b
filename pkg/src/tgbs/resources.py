"""Memory and runtime accounting for threshold-sampling runs.

The branch pool at step k of an l-mode run with m clicks so far holds 2^m
covariance matrices of size 2(l-k) x 2(l-k), i.e. 4(l-k)^2 * 2^m scalars.
With an overhead factor eta for temporaries and b bytes per scalar, the
modeled footprint in gigabytes is

    M_k(m) = eta * 4 (l-k)^2 * 2^m * b / 2^30.

Worst case over outcome orderings is all clicks first (the full branch count
multiplies the still-large matrices), so the peak sits at k = m. The module
also fits the published reference benchmark runs (log2 CPU-hours linear in
the click count) to extrapolate runtime, and records live per-step series
from instrumented sampling runs for comparison against the formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ResourceModel:
    """Constants of the memory/node model.

    eta is the storage overhead factor for temporaries, bytes_per_scalar the
    width of one stored float (16 for the quad-precision large runs, 8 for
    this package's live float64 pools). Node figures describe the reference
    cluster: 32 GB and 16 cores per node.
    """

    eta: float = 2.0
    bytes_per_scalar: int = 16
    node_memory_gb: float = 32.0
    node_cores: int = 16

    def __post_init__(self):
        if self.eta <= 0 or self.bytes_per_scalar <= 0 or self.node_memory_gb <= 0:
            raise ValueError("model constants must be positive")


@dataclass(frozen=True)
class NodeCount:
    """Nodes needed for a footprint: exact minimum and power-of-two rounding.

    Schedulers on large machines allocate power-of-two node blocks, so both
    numbers are reported.
    """

    minimum: int
    power_of_two: int


# Reference benchmark measurements for one sample at l = 2 m^2, 8 dB
# squeezing, Haar interferometer, on 16-core / 32 GB nodes.
# Columns: modes, clicks, nodes, cpu_hours, walltime_hours.
REFERENCE_RUNS = (
    (200, 10, 1, 1.81, 0.11),
    (288, 12, 4, 21.86, 0.68),
    (392, 14, 32, 250.17, 0.97),
    (512, 16, 128, 2028.91, 1.98),
    (624, 18, 1024, 15612.79, 1.90),
    (800, 20, 8192, 239773.95, 1.83),
)

# Reference peak-memory table (quad precision, eta = 2), same device family.
# Columns: modes, clicks, peak_gb.
REFERENCE_MEMORY = (
    (50, 5, 0.008),
    (200, 10, 4.407),
    (450, 15, 739.16),
    (800, 20, 76050.0),
)


def _memory_gb(eta, remaining, branch_count, bytes_per_scalar):
    # Shared by the closed-form model and the live recorder so that an
    # instrumented run reproduces the formula bit for bit.
    return eta * 4.0 * float(remaining) ** 2 * float(branch_count) * float(
        bytes_per_scalar
    ) / 2.0 ** 30


def memory_at_step(model, modes, clicks, step):
    """Modeled memory (GB) at step ``step`` with ``clicks`` clicks so far."""
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if not 0 <= step <= modes:
        raise ValueError("step %d out of range 0..%d" % (step, modes))
    if not 0 <= clicks <= step:
        raise ValueError("clicks %d out of range 0..%d" % (clicks, step))
    return _memory_gb(model.eta, modes - step, 2 ** clicks, model.bytes_per_scalar)


def peak_memory_worst_case(model, modes, clicks):
    """Peak modeled memory when all clicks land first (step k = m)."""
    if not 0 <= clicks <= modes:
        raise ValueError("clicks %d out of range 0..%d" % (clicks, modes))
    return memory_at_step(model, modes, clicks, clicks)


def worst_case_step_series(model, modes, clicks):
    """Per-step (step, clicks_so_far, gb) rows for the clicks-first ordering."""
    return tuple(
        (k, min(k, clicks), memory_at_step(model, modes, min(k, clicks), k))
        for k in range(modes + 1)
    )


def node_count(model, memory_gb):
    """Nodes covering a footprint: ceil division, plus power-of-two rounding."""
    if memory_gb < 0 or not math.isfinite(memory_gb):
        raise ValueError("memory_gb must be finite and >= 0")
    minimum = max(1, math.ceil(memory_gb / model.node_memory_gb))
    return NodeCount(minimum, 1 << (minimum - 1).bit_length())


@dataclass(frozen=True)
class RuntimeFit:
    """OLS fit of log2(CPU-hours) against click count."""

    slope: float
    intercept: float
    residuals: tuple

    def extrapolate(self, clicks):
        """Predicted CPU-hours at a click count."""
        return float(2.0 ** (self.slope * clicks + self.intercept))


def fit_runtime(observations):
    """Fit log2(cpu_hours) = slope * clicks + intercept by least squares.

    Parameters
    ----------
    observations : iterable of (clicks, cpu_hours)
        At least three distinct click counts, all cpu_hours > 0.
    """
    obs = [(int(m), float(h)) for m, h in observations]
    if len({m for m, _ in obs}) < 3:
        raise ValueError("need at least three distinct click counts to fit")
    if any(h <= 0 for _, h in obs):
        raise ValueError("cpu_hours must be positive")
    x = np.array([m for m, _ in obs], dtype=np.float64)
    y = np.log2([h for _, h in obs])
    slope, intercept = np.polyfit(x, y, 1)
    resid = tuple(float(v) for v in (y - (slope * x + intercept)))
    return RuntimeFit(float(slope), float(intercept), resid)


def reference_runtime_fit():
    """The runtime fit over the published reference runs."""
    return fit_runtime([(m, h) for _, m, _, h, _ in REFERENCE_RUNS])


class StepRecorder:
    """Observer for sampling runs: per-step branch counts and modeled memory.

    Pass as ``observer=`` to :func:`tgbs.sampler.sample`. Each step appends
    (step, clicks, branches, remaining, modeled_gb) with modeled_gb computed
    from the actual branch count through the same expression as
    :func:`memory_at_step`, so a run whose branch count is exactly 2^clicks
    reproduces the formula series bit for bit.
    """

    def __init__(self, model=None):
        self.model = model if model is not None else ResourceModel(bytes_per_scalar=8)
        self.rows = []

    def __call__(self, step, mode, outcome, clicks, branches, remaining):
        self.rows.append(
            (
                step,
                clicks,
                branches,
                remaining,
                _memory_gb(self.model.eta, remaining, branches, self.model.bytes_per_scalar),
            )
        )

    def reset(self):
        self.rows = []

    @property
    def peak_gb(self):
        return max((r[4] for r in self.rows), default=0.0)

    @property
    def peak_branches(self):
        return max((r[2] for r in self.rows), default=1)


def measure_live_peak(recorder):
    """(peak branch count, peak modeled GB) of a recorded run."""
    return recorder.peak_branches, recorder.peak_gb
