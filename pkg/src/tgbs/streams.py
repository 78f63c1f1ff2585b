"""Named, splittable random streams.

Every stochastic step in the package derives its generator from a root seed
plus a tuple of integer labels via numpy's SeedSequence. Derivation is a pure
function of (seed, labels), so any draw can be reproduced in isolation: draw
i of a sampling run uses stream(seed, DRAW, i) no matter how many draws came
before it or how many workers ran them.
"""

from __future__ import annotations

import numpy as np

# Domain labels keep independent uses of one user-facing seed from colliding.
DRAW = 0x5A01          # per-draw measurement coin flips
INTERFEROMETER = 0x5A02  # Haar unitary generation
GRAPH = 0x5A03         # planted-graph edge draws
UNIFORM = 0x5A04       # uniform subgraph baseline
RUN = 0x5A05           # per-run seed derivation for repeated searches
BENCH = 0x5A06         # benchmark pattern placement


def stream(seed, *labels):
    """Return a fresh ``numpy.random.Generator`` for (seed, labels).

    Parameters
    ----------
    seed : int
        Root seed, typically user-facing.
    *labels : int
        Domain constants and indices (draw number, run number, ...).

    Returns
    -------
    numpy.random.Generator
    """
    if not isinstance(seed, (int, np.integer)):
        raise ValueError("seed must be an integer, got %r" % (seed,))
    entropy = (int(seed),) + tuple(int(x) for x in labels)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed, *labels):
    """Derive a child integer seed from (seed, labels), for labelling output.

    Used where a child component wants its own root seed (e.g. one search run
    out of many) that is still reportable as a plain integer.
    """
    entropy = (int(seed),) + tuple(int(x) for x in labels)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
