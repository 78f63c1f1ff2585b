"""Gaussian states and the block operations the threshold sampler is built on.

Conventions, fixed package-wide and never switchable at runtime:

* hbar = 2, so the vacuum covariance matrix is the identity.
* Quadratures are interleaved (x1, p1, ..., xl, pl). Mode j (1-based, as in
  all public signatures) owns rows and columns 2j-2 and 2j-1 of the
  covariance matrix.
* Squeezing in dB follows the quadrature-variance convention
  dB = -10 log10(e^{-2r}), i.e. r = dB * ln(10) / 20, so 8 dB -> r = 0.9210.
* Loss in dB converts to intensity transmission T = 10^(-dB/10).

States are immutable values; every operation returns a new state. All
covariance matrices are kept exactly symmetric by construction (symmetrized
once on entry, and after every Schur-complement update).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDomainError

# Tolerances. TAU_SYM bounds accepted asymmetry on input matrices, TAU_UNITARY
# bounds acceptable deviation of interferometer matrices from unitarity,
# TAU_PHYS is the slack on the symplectic-eigenvalue physicality test, and
# TAU_PROB is the slack allowed on single-branch probabilities before they are
# treated as evidence of an unphysical state.
TAU_SYM = 1e-10
TAU_UNITARY = 1e-10
TAU_PHYS = 1e-8
TAU_PROB = 1e-12


def _readonly(a):
    a = np.array(a, dtype=np.float64, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianState:
    """An l-mode Gaussian state: covariance matrix plus mean vector.

    Attributes
    ----------
    cov : (2l, 2l) ndarray
        Quadrature covariance matrix, interleaved ordering, hbar = 2.
    mean : (2l,) ndarray
        Quadrature mean vector.

    Construction validates shape, finiteness and symmetry (within TAU_SYM)
    and then stores an exactly symmetrized, read-only copy. Physicality
    (symplectic eigenvalues >= 1) is a separate, more expensive check; see
    :func:`assert_physical`.
    """

    cov: np.ndarray
    mean: np.ndarray = None

    def __post_init__(self):
        cov = np.array(self.cov, dtype=np.float64, order="C")
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("cov must be square, got shape %r" % (cov.shape,))
        dim = cov.shape[0]
        if dim < 2 or dim % 2:
            raise ValueError("cov must be 2l x 2l with l >= 1, got %d" % dim)
        mean = self.mean
        mean = np.zeros(dim) if mean is None else np.array(mean, dtype=np.float64)
        if mean.shape != (dim,):
            raise ValueError(
                "mean shape %r does not match cov shape %r" % (mean.shape, cov.shape)
            )
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(mean))):
            raise ValueError("state entries must be finite")
        asym = np.max(np.abs(cov - cov.T))
        if asym > TAU_SYM:
            raise ValueError(
                "covariance asymmetry %.3e exceeds %.1e" % (asym, TAU_SYM)
            )
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "cov", _readonly(cov))
        object.__setattr__(self, "mean", _readonly(mean))

    @property
    def n_modes(self):
        return self.cov.shape[0] // 2


def vacuum_state(n_modes):
    """The n-mode vacuum: identity covariance, zero mean."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1, got %d" % n_modes)
    return GaussianState(np.eye(2 * n_modes))


def squeezed_vacuum(squeezing):
    """Product of single-mode squeezed vacua.

    Parameters
    ----------
    squeezing : array_like of float
        One squeezing parameter r per mode; mode i gets quadrature variances
        (e^{-2r_i}, e^{2r_i}). A scalar makes a single-mode state.
    """
    r = np.atleast_1d(np.asarray(squeezing, dtype=np.float64))
    if r.ndim != 1 or r.size < 1:
        raise ValueError("squeezing must be a non-empty 1-D vector")
    if not np.all(np.isfinite(r)):
        raise ValueError("squeezing values must be finite")
    diag = np.empty(2 * r.size)
    diag[0::2] = np.exp(-2.0 * r)
    diag[1::2] = np.exp(2.0 * r)
    return GaussianState(np.diag(diag))


def haar_unitary(n, seed=None):
    """Draw an n x n unitary from the Haar measure.

    QR of a complex Ginibre matrix, with the R diagonal phases divided out
    so the distribution is exactly Haar rather than QR-gauge-biased.

    Parameters
    ----------
    n : int
    seed : int, numpy Generator, or None
    """
    if n < 1:
        raise ValueError("n must be >= 1, got %d" % n)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d)).conj()


def interferometer_symplectic(U):
    """The 2n x 2n orthogonal symplectic matrix of an n-mode interferometer.

    Interleaved ordering: with a -> U a on the mode operators,
    x'_j = sum_k (Re U_jk x_k - Im U_jk p_k) and
    p'_j = sum_k (Im U_jk x_k + Re U_jk p_k).
    """
    U = np.asarray(U, dtype=np.complex128)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError("U must be square, got shape %r" % (U.shape,))
    n = U.shape[0]
    defect = np.max(np.abs(U @ U.conj().T - np.eye(n)))
    if defect > TAU_UNITARY:
        raise ValueError("U unitarity defect %.3e exceeds %.1e" % (defect, TAU_UNITARY))
    S = np.empty((2 * n, 2 * n))
    S[0::2, 0::2] = U.real
    S[0::2, 1::2] = -U.imag
    S[1::2, 0::2] = U.imag
    S[1::2, 1::2] = U.real
    return S


def apply_interferometer(state, U):
    """Pass the state through a linear interferometer: V -> S V S^T, r -> S r."""
    S = interferometer_symplectic(U)
    if S.shape[0] != state.cov.shape[0]:
        raise ValueError(
            "U is %d-mode but state has %d modes"
            % (S.shape[0] // 2, state.n_modes)
        )
    return GaussianState(S @ state.cov @ S.T, S @ state.mean)


def apply_loss(state, transmission):
    """Apply per-mode photon loss with intensity transmission T_i in [0, 1].

    Each 2x2 diagonal block becomes T_i V_ii + (1 - T_i) I, cross blocks are
    scaled by sqrt(T_i T_j), and means by sqrt(T_i). A scalar T applies to
    every mode.
    """
    T = np.asarray(transmission, dtype=np.float64)
    l = state.n_modes
    if T.ndim == 0:
        T = np.full(l, float(T))
    if T.shape != (l,):
        raise ValueError("transmission must be scalar or length-%d, got %r" % (l, T.shape,))
    if not np.all(np.isfinite(T)) or np.any(T < 0.0) or np.any(T > 1.0):
        raise ValueError("transmission values must lie in [0, 1]")
    t = np.repeat(np.sqrt(T), 2)
    cov = t[:, None] * state.cov * t[None, :]
    cov[np.diag_indices_from(cov)] += 1.0 - np.repeat(T, 2)
    return GaussianState(cov, t * state.mean)


@dataclass(frozen=True, eq=False)
class ModeBlocks:
    """One mode singled out of a state: the B position of the block form.

    V_A is the 2(l-1) x 2(l-1) block of the kept modes (original ascending
    order), V_B the 2x2 block of the measured mode, V_AB the cross block,
    with r_A and r_B the matching mean pieces. ``mode`` records which mode
    sits at B so the partition can be undone.
    """

    V_A: np.ndarray
    V_AB: np.ndarray
    V_B: np.ndarray
    r_A: np.ndarray
    r_B: np.ndarray
    mode: int = field(default=0)

    def __post_init__(self):
        for name in ("V_A", "V_AB", "V_B", "r_A", "r_B"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def partition_mode(state, mode):
    """Split a state's cov/mean into (A, B) blocks with ``mode`` at B.

    Parameters
    ----------
    state : GaussianState
    mode : int
        1-based mode index.
    """
    l = state.n_modes
    if not 1 <= mode <= l:
        raise ValueError("mode %d out of range 1..%d" % (mode, l))
    b0 = 2 * (mode - 1)
    bi = np.array([b0, b0 + 1])
    ai = np.concatenate([np.arange(0, b0), np.arange(b0 + 2, 2 * l)])
    return ModeBlocks(
        V_A=state.cov[np.ix_(ai, ai)],
        V_AB=state.cov[np.ix_(ai, bi)],
        V_B=state.cov[np.ix_(bi, bi)],
        r_A=state.mean[ai],
        r_B=state.mean[bi],
        mode=mode,
    )


def reassemble(blocks):
    """Inverse of :func:`partition_mode`; bit-exact round trip."""
    dim = blocks.V_A.shape[0] + 2
    b0 = 2 * (blocks.mode - 1)
    if not 0 <= b0 <= dim - 2:
        raise ValueError("blocks.mode %d inconsistent with dimension %d" % (blocks.mode, dim))
    bi = np.array([b0, b0 + 1])
    ai = np.concatenate([np.arange(0, b0), np.arange(b0 + 2, dim)])
    cov = np.empty((dim, dim))
    mean = np.empty(dim)
    cov[np.ix_(ai, ai)] = blocks.V_A
    cov[np.ix_(ai, bi)] = blocks.V_AB
    cov[np.ix_(bi, ai)] = blocks.V_AB.T
    cov[np.ix_(bi, bi)] = blocks.V_B
    mean[ai] = blocks.r_A
    mean[bi] = blocks.r_B
    return GaussianState(cov, mean)


def _inv2_vb_plus_eye(V_B):
    # Closed-form adjugate inverse of the 2x2 matrix V_B + I, with the
    # positive-definiteness test a physical branch must pass.
    t00 = V_B[0, 0] + 1.0
    t11 = V_B[1, 1] + 1.0
    t01 = 0.5 * (V_B[0, 1] + V_B[1, 0])
    det = t00 * t11 - t01 * t01
    if not (np.isfinite(det) and det > 0.0 and t00 > 0.0):
        raise NumericalDomainError(
            "V_B + I is not positive definite (det=%r, t00=%r)" % (det, t00)
        )
    return t11 / det, -t01 / det, t00 / det, det


def vacuum_overlap_prob(V_B, r_B):
    """No-click probability of one Gaussian branch's measured mode.

    q = 2 exp(-r_B^T (V_B + I)^{-1} r_B) / sqrt(det(V_B + I)).

    Raises NumericalDomainError if V_B + I is not positive definite or the
    result exceeds 1 by more than TAU_PROB; values within TAU_PROB of 1 are
    clamped to 1.
    """
    V_B = np.asarray(V_B, dtype=np.float64)
    r_B = np.asarray(r_B, dtype=np.float64)
    if V_B.shape != (2, 2) or r_B.shape != (2,):
        raise ValueError("V_B must be 2x2 and r_B length 2")
    i00, i01, i11, det = _inv2_vb_plus_eye(V_B)
    quad = i00 * r_B[0] ** 2 + 2.0 * i01 * r_B[0] * r_B[1] + i11 * r_B[1] ** 2
    q = 2.0 * np.exp(-quad) / np.sqrt(det)
    if q > 1.0 + TAU_PROB:
        raise NumericalDomainError("branch no-click probability %r exceeds 1" % q)
    return float(min(q, 1.0))


def conditional_no_click_update(blocks):
    """Condition the A modes on projecting mode B onto vacuum.

    Returns (V_A', r_A') with V_A' = V_A - V_AB (V_B+I)^{-1} V_AB^T and
    r_A' = r_A - V_AB (V_B+I)^{-1} r_B. The output covariance is explicitly
    symmetrized; normalization of the branch is the sampler's business.
    """
    i00, i01, i11, _ = _inv2_vb_plus_eye(blocks.V_B)
    VAB = blocks.V_AB
    # W = V_AB (V_B+I)^{-1}, expanded through the adjugate inverse.
    W = np.empty_like(VAB)
    W[:, 0] = VAB[:, 0] * i00 + VAB[:, 1] * i01
    W[:, 1] = VAB[:, 0] * i01 + VAB[:, 1] * i11
    Vp = blocks.V_A - W @ VAB.T
    Vp = 0.5 * (Vp + Vp.T)
    rp = blocks.r_A - W @ blocks.r_B
    return Vp, rp


def symplectic_form(n_modes):
    """The interleaved symplectic form Omega: blocks [[0, 1], [-1, 0]]."""
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for j in range(n_modes):
        omega[2 * j, 2 * j + 1] = 1.0
        omega[2 * j + 1, 2 * j] = -1.0
    return omega


def symplectic_eigenvalues(cov):
    """Symplectic spectrum of a covariance matrix, ascending.

    Physical states have every value >= 1 (hbar = 2). Computed as the moduli
    of the eigenvalues of i Omega V, which come in +/- pairs.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    return np.sort(np.abs(ev))[::2]


def assert_physical(state, tol=TAU_PHYS):
    """Raise NumericalDomainError unless all symplectic eigenvalues >= 1 - tol."""
    nu_min = symplectic_eigenvalues(state.cov)[0]
    if not nu_min >= 1.0 - tol:
        raise NumericalDomainError(
            "minimum symplectic eigenvalue %.12g violates the uncertainty bound" % nu_min
        )


def mean_photon_number(state):
    """Total mean photon number: (tr(V - I) + |r|^2) / 4."""
    return float(
        (np.trace(state.cov) - state.cov.shape[0] + np.dot(state.mean, state.mean)) / 4.0
    )


def squeezing_db_to_r(db):
    """Squeezing level in dB to the parameter r (variance convention)."""
    return float(db) * np.log(10.0) / 20.0


def loss_db_to_transmission(db):
    """Loss in dB to intensity transmission: T = 10^(-dB/10)."""
    if db < 0:
        raise ValueError("loss in dB must be >= 0, got %r" % (db,))
    return float(10.0 ** (-float(db) / 10.0))
