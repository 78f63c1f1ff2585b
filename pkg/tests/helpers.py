"""Shared builders for the test suite."""

import numpy as np

from tgbs import (
    apply_interferometer,
    apply_loss,
    haar_unitary,
    loss_db_to_transmission,
    squeezed_vacuum,
    squeezing_db_to_r,
)
from tgbs.states import GaussianState

LOSS_LEVELS_DB = (0.0, 1.2, 3.0, 6.0)


def prob_tol(a, b, rel=1e-9, floor=1e-12):
    """Tolerance for comparing two routes to the same probability."""
    return max(rel * max(abs(a), abs(b)), floor)


def random_instance(rng, n_modes, max_db=8.0, loss_db=0.0, displaced=False):
    """Squeezed vacuum through a Haar interferometer, optional loss and mean."""
    r_hi = squeezing_db_to_r(max_db)
    r = rng.uniform(0.05, r_hi, size=n_modes)
    state = apply_interferometer(squeezed_vacuum(r), haar_unitary(n_modes, rng))
    if loss_db:
        state = apply_loss(state, loss_db_to_transmission(loss_db))
    if displaced:
        # loss keeps means physical whatever their size; 0.4 keeps the
        # no-click probabilities away from the underflow regime
        state = GaussianState(state.cov, rng.normal(0.0, 0.4, size=2 * n_modes))
    return state


def pattern_index(bits):
    """Mode 1 is the least significant bit."""
    idx = 0
    for j, b in enumerate(bits):
        idx |= int(b) << j
    return idx
