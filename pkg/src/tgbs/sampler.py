"""Sequential threshold-detector sampling of Gaussian states.

After measuring some modes of a Gaussian state with threshold detectors, the
conditional state of the unmeasured modes is no longer Gaussian; it is a
signed linear combination of Gaussian states ("branches"). Measuring one more
mode maps the mixture as follows, with q_k the vacuum overlap of branch k's
measured mode and p = sum_k a_k q_k the aggregated no-click probability:

* no click: branch count stays M, coefficients become a_k q_k / p, and every
  branch takes the vacuum-projection update (V', r').
* click: branch count doubles to 2M; branch k contributes a_k/(1-p) with its
  state unchanged (mode dropped) and -a_k q_k/(1-p) with the projected state.

Both rules keep sum_k a_k = 1, which is the running correctness check.

Branch pools are stored structure-of-arrays: coeffs (M,), covs (M, 2n, 2n),
means (M, 2n), plus the original mode label of each stored slot. The measured
mode always sits in the last stored slot: a sampling run permutes the state
once up front into measurement order, so each step is a plain slice, and
``measure_mode`` permutes on the fly for an arbitrary mode. Pools are written
once per step into freshly allocated output arrays, never mutated in place.

Probabilities are aggregated with the compensated chunked reduction from
:mod:`tgbs.accumulate`; outputs are bit-identical for a fixed seed and chunk
size regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accumulate import Execution, chunk_bounds, combine, partial_sum
from .errors import ImpossibleOutcomeError, NumericalDomainError, PrecisionError
from .states import TAU_PROB, GaussianState, assert_physical
from .streams import DRAW, stream

# Tolerance on the unit-trace invariant sum_k a_k = 1 after each step.
TAU_NORM = 1e-9


@dataclass(frozen=True)
class ClickPattern:
    """One measurement outcome: bit j-1 is the click result of mode j.

    ``bits`` is always indexed by original mode label (mode 1 first),
    independent of the measurement order, which is kept in ``order``.
    """

    bits: tuple
    order: tuple = None

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("pattern bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(m) for m in self.order))

    @property
    def n_clicks(self):
        return sum(self.bits)

    def clicked_modes(self):
        """1-based labels of the modes that clicked, ascending."""
        return tuple(j + 1 for j, b in enumerate(self.bits) if b)

    def bitstring(self):
        """Pattern as text, mode 1 leftmost."""
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_bitstring(cls, text, order=None):
        return cls(tuple(int(c) for c in text.strip()), order)


@dataclass(frozen=True)
class MeasurementPlan:
    """How a sampling run measures: order, optional forced outcomes, seed.

    ``order`` lists 1-based mode labels in measurement sequence; None means
    descending (mode l first). ``forced`` pins every outcome (benchmark and
    exact-probability mode) and may be a ClickPattern or a bit sequence
    indexed by mode label. ``rng_seed`` is the root seed; draw i of a run
    uses the derived stream (rng_seed, DRAW, i).
    """

    order: tuple = None
    forced: object = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(m) for m in self.order))

    def resolve_order(self, n_modes):
        if self.order is None:
            return tuple(range(n_modes, 0, -1))
        order = self.order
        if sorted(order) != list(range(1, n_modes + 1)):
            raise ValueError(
                "order %r is not a permutation of modes 1..%d" % (order, n_modes)
            )
        return order

    def resolve_forced(self, n_modes):
        if self.forced is None:
            return None
        bits = self.forced.bits if isinstance(self.forced, ClickPattern) else self.forced
        bits = tuple(int(b) for b in bits)
        if len(bits) != n_modes or any(b not in (0, 1) for b in bits):
            raise ValueError("forced pattern must be %d bits" % n_modes)
        return bits


@dataclass(frozen=True)
class WeightedBranch:
    """One signed Gaussian term a_k rho(V_k, r_k) of the conditional state."""

    coeff: float
    state: GaussianState


@dataclass(frozen=True, eq=False)
class StateMixture:
    """The conditional state after some threshold measurements.

    Stored as one contiguous pool: ``coeffs`` (M,), ``covs`` (M, 2n, 2n) and
    ``means`` (M, 2n) over the unmeasured modes, whose original 1-based
    labels sit in ``labels`` (storage order). ``branches`` materializes the
    pool as WeightedBranch values with modes sorted ascending by label.
    """

    coeffs: np.ndarray
    covs: np.ndarray
    means: np.ndarray
    labels: tuple
    clicks_so_far: int = 0
    history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        M = self.coeffs.shape[0]
        n = len(self.labels)
        if self.covs.shape != (M, 2 * n, 2 * n) or self.means.shape != (M, 2 * n):
            raise ValueError("inconsistent pool shapes")

    @property
    def n_branches(self):
        return self.coeffs.shape[0]

    @property
    def remaining_modes(self):
        return len(self.labels)

    @property
    def branches(self):
        if self.remaining_modes == 0:
            return tuple(WeightedBranch(float(c), None) for c in self.coeffs)
        srt = np.argsort(np.asarray(self.labels))
        cols = np.empty(2 * len(srt), dtype=np.intp)
        cols[0::2] = 2 * srt
        cols[1::2] = 2 * srt + 1
        return tuple(
            WeightedBranch(
                float(self.coeffs[k]),
                GaussianState(
                    self.covs[k][np.ix_(cols, cols)], self.means[k][cols]
                ),
            )
            for k in range(self.n_branches)
        )

    def coefficient_sum(self, execution=None):
        """sum_k a_k via the deterministic chunked reduction; should be 1."""
        ex = execution if execution is not None else Execution()
        bounds = chunk_bounds(self.n_branches, ex.chunk_size)
        parts = [partial_sum(self.coeffs[lo:hi], ex.precision) for lo, hi in bounds]
        return combine(parts, ex.precision)


def init_mixture(state, validate=True):
    """Wrap a Gaussian state as a single-branch mixture (coeff 1, no clicks)."""
    if validate:
        assert_physical(state)
    l = state.n_modes
    return StateMixture(
        coeffs=np.ones(1),
        covs=state.cov[None, :, :].copy(),
        means=state.mean[None, :].copy(),
        labels=tuple(range(1, l + 1)),
    )


def _map_chunks(fn, bounds, workers):
    # Chunk results are consumed in index order regardless of who computed
    # them, which is what makes worker count irrelevant to the output.
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(b[0], b[1]), bounds))


def _pool_to_last(covs, means, labels, mode):
    # Permute the stored slots so `mode` occupies the last one.
    pos = labels.index(mode)
    n = len(labels)
    if pos == n - 1:
        return covs, means, labels
    slots = list(range(n))
    slots.append(slots.pop(pos))
    cols = np.empty(2 * n, dtype=np.intp)
    cols[0::2] = [2 * s for s in slots]
    cols[1::2] = [2 * s + 1 for s in slots]
    covs = covs[:, cols, :][:, :, cols]
    means = means[:, cols]
    labels = tuple(labels[s] for s in slots)
    return covs, means, labels


def _q_pass(coeffs, covs, means, ex):
    """Vacuum overlaps of the last stored mode, and the aggregated p.

    Returns (p, q, aq, i00, i01, i11) where i** are the entries of the
    closed-form 2x2 inverse of V_B + I per branch.
    """
    d = covs.shape[1]
    t00 = covs[:, d - 2, d - 2] + 1.0
    t11 = covs[:, d - 1, d - 1] + 1.0
    t01 = 0.5 * (covs[:, d - 2, d - 1] + covs[:, d - 1, d - 2])
    det = t00 * t11 - t01 * t01
    if not (np.all(det > 0.0) and np.all(t00 > 0.0)):
        raise NumericalDomainError("a branch's V_B + I is not positive definite")
    i00 = t11 / det
    i01 = -t01 / det
    i11 = t00 / det
    rb0 = means[:, d - 2]
    rb1 = means[:, d - 1]
    quad = i00 * rb0 * rb0 + 2.0 * i01 * rb0 * rb1 + i11 * rb1 * rb1
    q = 2.0 * np.exp(-quad) / np.sqrt(det)
    qmax = float(q.max())
    if qmax > 1.0 + TAU_PROB:
        raise NumericalDomainError("a branch's no-click probability exceeds 1")
    if qmax > 1.0:
        np.minimum(q, 1.0, out=q)
    aq = coeffs * q
    bounds = chunk_bounds(aq.shape[0], ex.chunk_size)
    if len(bounds) == 1:
        p = combine([partial_sum(aq, ex.precision)], ex.precision)
    else:
        parts = _map_chunks(
            lambda lo, hi: partial_sum(aq[lo:hi], ex.precision), bounds, ex.workers
        )
        p = combine(parts, ex.precision)
    if p < 0.0 or p > 1.0:
        # The reduction itself is exact, but each product a_k q_k (and the
        # state behind it) carries float64 rounding, so a near-cancelled p is
        # only known to within the magnitude of what cancelled. Allow that
        # error scale before declaring corruption; for a single branch this
        # floor is just TAU_PROB.
        slack = max(
            TAU_PROB, 256.0 * np.finfo(np.float64).eps * float(np.abs(aq).sum())
        )
        if p < -slack or p > 1.0 + slack:
            raise PrecisionError(
                "aggregated no-click probability %r is outside [0, 1] by more "
                "than the cancellation error scale %g; the branch pool is "
                "corrupt or needs a wider float type" % (p, slack)
            )
        p = min(max(p, 0.0), 1.0)
    return p, q, aq, i00, i01, i11


def _conditioned(covs, means, i00, i01, i11, ex):
    """Vacuum-projection update of every branch: (V', r') with B dropped."""
    M, d, _ = covs.shape
    Vc = np.empty((M, d - 2, d - 2))
    rc = np.empty((M, d - 2))

    def work(lo, hi):
        VA = covs[lo:hi, : d - 2, : d - 2]
        VAB = covs[lo:hi, : d - 2, d - 2 :]
        w0 = VAB[:, :, 0] * i00[lo:hi, None] + VAB[:, :, 1] * i01[lo:hi, None]
        w1 = VAB[:, :, 0] * i01[lo:hi, None] + VAB[:, :, 1] * i11[lo:hi, None]
        schur = w0[:, :, None] * VAB[:, None, :, 0] + w1[:, :, None] * VAB[:, None, :, 1]
        V = VA - schur
        Vc[lo:hi] = 0.5 * (V + np.swapaxes(V, 1, 2))
        rc[lo:hi] = means[lo:hi, : d - 2] - (
            w0 * means[lo:hi, d - 2, None] + w1 * means[lo:hi, d - 1, None]
        )

    _map_chunks(work, chunk_bounds(M, ex.chunk_size), ex.workers)
    return Vc, rc


def _decide(p, forced_bit, rng):
    # Degenerate probabilities force the outcome so normalizers stay away
    # from zero; forced outcomes below tolerance are impossible.
    if forced_bit is not None:
        if forced_bit == 1:
            if 1.0 - p < TAU_PROB:
                raise ImpossibleOutcomeError("forced click has probability ~0")
            return 1
        if p < TAU_PROB:
            raise ImpossibleOutcomeError("forced no-click has probability ~0")
        return 0
    if p >= 1.0 - TAU_PROB:
        return 0
    if p <= TAU_PROB:
        return 1
    return 1 if rng.random() >= p else 0


def _apply_outcome(outcome, p, aq, coeffs, covs, means, i00, i01, i11, ex):
    d = covs.shape[1]
    Vc, rc = _conditioned(covs, means, i00, i01, i11, ex)
    if outcome == 0:
        return aq / p, Vc, rc
    M = coeffs.shape[0]
    # Unchanged-state branches first, projected branches second; this block
    # order is part of the determinism contract (it fixes chunk boundaries).
    newc = np.concatenate([coeffs, -aq]) / (1.0 - p)
    newV = np.empty((2 * M, d - 2, d - 2))
    newV[:M] = covs[:, : d - 2, : d - 2]
    newV[M:] = Vc
    newr = np.empty((2 * M, d - 2))
    newr[:M] = means[:, : d - 2]
    newr[M:] = rc
    return newc, newV, newr


def no_click_probability(mixture, mode, execution=None):
    """Aggregated no-click probability p = sum_k a_k q_k for one mode."""
    ex = execution if execution is not None else Execution()
    if mode not in mixture.labels:
        raise ValueError("mode %d is not among remaining modes %r" % (mode, mixture.labels))
    covs, means, _ = _pool_to_last(mixture.covs, mixture.means, mixture.labels, mode)
    p, _, _, _, _, _ = _q_pass(mixture.coeffs, covs, means, ex)
    return p


def measure_mode(mixture, mode, outcome=None, rng=None, execution=None):
    """Measure one mode of the mixture with a threshold detector.

    Parameters
    ----------
    mixture : StateMixture
    mode : int
        1-based original mode label; must be unmeasured.
    outcome : int or None
        Force 0 (no click) or 1 (click); None draws randomly from ``rng``.
    rng : int seed or numpy Generator
        Required when outcome is None.

    Returns
    -------
    (outcome, StateMixture, prob_of_outcome)
        The realized bit, the conditional mixture on the remaining modes,
        and the probability of the realized outcome.
    """
    ex = execution if execution is not None else Execution()
    if mode not in mixture.labels:
        raise ValueError("mode %d is not among remaining modes %r" % (mode, mixture.labels))
    if outcome is None:
        if rng is None:
            raise ValueError("a random outcome needs an rng")
        rng = np.random.default_rng(rng)
    elif outcome not in (0, 1):
        raise ValueError("outcome must be 0, 1 or None")
    covs, means, labels = _pool_to_last(mixture.covs, mixture.means, mixture.labels, mode)
    p, _, aq, i00, i01, i11 = _q_pass(mixture.coeffs, covs, means, ex)
    bit = _decide(p, outcome, rng)
    newc, newV, newr = _apply_outcome(
        bit, p, aq, mixture.coeffs, covs, means, i00, i01, i11, ex
    )
    out = StateMixture(
        coeffs=newc,
        covs=newV,
        means=newr,
        labels=labels[:-1],
        clicks_so_far=mixture.clicks_so_far + bit,
        history=mixture.history + ((mode, bit),),
    )
    return bit, out, (p if bit == 0 else 1.0 - p)


@dataclass(frozen=True)
class ChainResult:
    """Outcome of a forced measurement chain.

    ``feasible`` is False when some forced outcome had probability below
    tolerance; then ``probability`` is 0 and ``steps_completed`` says how far
    the chain got.
    """

    probability: float
    feasible: bool = True
    steps_completed: int = 0
    clicks: int = 0
    peak_branches: int = 1


class _Abort(Exception):
    pass


def _storage_pool(state, order):
    # Permute once so that step t measures the last stored slot.
    storage = tuple(reversed(order))
    cols = np.empty(2 * len(storage), dtype=np.intp)
    cols[0::2] = [2 * (m - 1) for m in storage]
    cols[1::2] = [2 * (m - 1) + 1 for m in storage]
    covs = state.cov[np.ix_(cols, cols)][None, :, :].copy()
    means = state.mean[cols][None, :].copy()
    return np.ones(1), covs, means


def _run_chain(
    state,
    order,
    forced_bits=None,
    rng=None,
    execution=None,
    observer=None,
    check=False,
    abort_target=None,
):
    """Drive one measurement chain over all modes in ``order``.

    Single internal path shared by sample(), forced evaluation and the
    postselected stream, so that aborts and forced outcomes cannot diverge
    from plain sampling. Returns a ChainResult plus the bits by mode label.
    """
    ex = execution if execution is not None else Execution()
    l = state.n_modes
    coeffs, covs, means = _storage_pool(state, order)
    bits = [0] * l
    joint = 1.0
    clicks = 0
    peak = 1
    try:
        for t, mode in enumerate(order):
            p, _, aq, i00, i01, i11 = _q_pass(coeffs, covs, means, ex)
            forced_bit = forced_bits[mode - 1] if forced_bits is not None else None
            bit = _decide(p, forced_bit, rng)
            bits[mode - 1] = bit
            joint *= p if bit == 0 else 1.0 - p
            clicks += bit
            remaining = l - t - 1
            if abort_target is not None:
                if clicks > abort_target or clicks + remaining < abort_target:
                    raise _Abort
            coeffs, covs, means = _apply_outcome(
                bit, p, aq, coeffs, covs, means, i00, i01, i11, ex
            )
            peak = max(peak, coeffs.shape[0])
            if check:
                if coeffs.shape[0] != 2 ** clicks:
                    raise PrecisionError(
                        "branch count %d != 2^%d" % (coeffs.shape[0], clicks)
                    )
                total = combine(
                    [
                        partial_sum(coeffs[lo:hi], ex.precision)
                        for lo, hi in chunk_bounds(coeffs.shape[0], ex.chunk_size)
                    ],
                    ex.precision,
                )
                if abs(total - 1.0) > TAU_NORM:
                    raise PrecisionError(
                        "mixture trace %r drifted from 1 after step %d" % (total, t + 1)
                    )
            if observer is not None:
                observer(
                    step=t + 1,
                    mode=mode,
                    outcome=bit,
                    clicks=clicks,
                    branches=coeffs.shape[0],
                    remaining=remaining,
                )
    except _Abort:
        return ChainResult(0.0, True, t + 1, clicks, peak), bits, True
    except ImpossibleOutcomeError:
        return ChainResult(0.0, False, t, clicks, peak), bits, False
    return ChainResult(joint, True, l, clicks, peak), bits, False


def sample(
    state,
    plan=None,
    draw_index=0,
    execution=None,
    observer=None,
    check_invariants=False,
    validate=True,
):
    """Draw one exact threshold-detector sample from a Gaussian state.

    Parameters
    ----------
    state : GaussianState
    plan : MeasurementPlan, optional
        Order, forced outcomes and seed; default measures mode l down to 1
        with seed 0.
    draw_index : int
        Which draw of a run this is; the coin-flip stream is a pure function
        of (plan.rng_seed, draw_index), so draws are reproducible in
        isolation and may run concurrently.
    observer : callable, optional
        Called after every step with keyword arguments (step, mode, outcome,
        clicks, branches, remaining); used for instrumentation.
    check_invariants : bool
        Verify branch count = 2^clicks and sum(a_k) = 1 after every step.

    Returns
    -------
    (ClickPattern, float)
        The sampled pattern and its exact joint probability (the product of
        per-step conditional probabilities).
    """
    plan = plan if plan is not None else MeasurementPlan()
    if validate:
        assert_physical(state)
    order = plan.resolve_order(state.n_modes)
    forced = plan.resolve_forced(state.n_modes)
    rng = None if forced is not None else stream(plan.rng_seed, DRAW, draw_index)
    result, bits, _ = _run_chain(
        state,
        order,
        forced_bits=forced,
        rng=rng,
        execution=execution,
        observer=observer,
        check=check_invariants,
    )
    if not result.feasible:
        raise ImpossibleOutcomeError(
            "forced pattern is impossible (step %d)" % (result.steps_completed + 1)
        )
    return ClickPattern(tuple(bits), order), result.probability


def forced_chain(state, pattern, order=None, execution=None, validate=True, observer=None):
    """Evaluate a fully forced measurement chain.

    Returns a ChainResult; infeasible patterns (some forced outcome has
    probability below tolerance) give probability 0 with feasible=False
    rather than an exception.
    """
    if validate:
        assert_physical(state)
    l = state.n_modes
    plan = MeasurementPlan(order=order, forced=pattern)
    bits = plan.resolve_forced(l)
    result, _, _ = _run_chain(
        state,
        plan.resolve_order(l),
        forced_bits=bits,
        execution=execution,
        observer=observer,
    )
    return result


def pattern_probability(state, pattern, order=None, execution=None, validate=True):
    """Exact probability of one click pattern, as a plain float.

    The chain rule makes this the product of per-step conditional
    probabilities with every outcome forced; the value is order-free even
    though the evaluation is sequential.
    """
    return forced_chain(state, pattern, order, execution, validate).probability


class PostselectedStream:
    """Iterator of samples postselected on an exact click count.

    Yields only ClickPatterns with ``target_clicks`` clicks. A draw is
    aborted as soon as its click count exceeds the target or the remaining
    modes cannot reach it; aborts only discard draws already outside the
    postselection set, so the accepted-sample distribution is untouched.
    Draw i always uses the stream (rng_seed, DRAW, i), so the accepted
    sequence is reproducible no matter how draws are scheduled.

    Attributes
    ----------
    draws_attempted, accepted_count : int
    acceptance_fraction : float or None
    last_joint_prob, last_draw_index, last_peak_branches
        Metadata of the most recent accepted draw.
    exhausted : bool
        True once max_draws was reached; iteration then stops. Exhaustion
        with zero acceptances is reported this way, never as an error.
    """

    def __init__(self, state, plan=None, target_clicks=0, max_draws=None, execution=None):
        plan = plan if plan is not None else MeasurementPlan()
        if plan.forced is not None:
            raise ValueError("postselection and forced outcomes cannot be combined")
        l = state.n_modes
        if not 0 <= target_clicks <= l:
            raise ValueError("target_clicks %d out of range 0..%d" % (target_clicks, l))
        if max_draws is not None and max_draws < 1:
            raise ValueError("max_draws must be >= 1 or None")
        assert_physical(state)
        self._state = state
        self._order = plan.resolve_order(l)
        self._seed = plan.rng_seed
        self._target = target_clicks
        self._max_draws = max_draws
        self._execution = execution
        self.draws_attempted = 0
        self.accepted_count = 0
        self.exhausted = False
        self.last_joint_prob = None
        self.last_draw_index = None
        self.last_peak_branches = None

    @property
    def acceptance_fraction(self):
        if self.draws_attempted == 0:
            return None
        return self.accepted_count / self.draws_attempted

    def __iter__(self):
        return self

    def __next__(self):
        while self._max_draws is None or self.draws_attempted < self._max_draws:
            i = self.draws_attempted
            self.draws_attempted += 1
            rng = stream(self._seed, DRAW, i)
            result, bits, aborted = _run_chain(
                self._state,
                self._order,
                rng=rng,
                execution=self._execution,
                abort_target=self._target,
            )
            if not aborted and result.clicks == self._target:
                self.accepted_count += 1
                self.last_joint_prob = result.probability
                self.last_draw_index = i
                self.last_peak_branches = result.peak_branches
                return ClickPattern(tuple(bits), self._order)
        self.exhausted = True
        raise StopIteration


def postselected_sample_stream(state, plan=None, target_clicks=0, max_draws=None, execution=None):
    """Stream of samples with exactly ``target_clicks`` clicks; see PostselectedStream."""
    return PostselectedStream(state, plan, target_clicks, max_draws, execution)
