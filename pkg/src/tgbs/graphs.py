"""Dense-subgraph search driven by threshold samples.

A graph's adjacency matrix is mapped onto a Gaussian state (squeezing from
the eigenvalues, interferometer from the eigenvectors) so that threshold
samples postselected on k clicks land preferentially on dense k-vertex
subgraphs: clicked modes are taken as vertex labels. Random search then just
keeps the best subgraph seen over a sample budget, with a uniform sampler as
the baseline strategy.

Vertices are 1-based in every public signature, matching the DIMACS clique
file convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimacsParseError
from .sampler import MeasurementPlan, postselected_sample_stream
from .states import (
    GaussianState,
    apply_interferometer,
    apply_loss,
    loss_db_to_transmission,
    squeezed_vacuum,
)
from .streams import GRAPH, UNIFORM, stream


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph: vertex count, 0/1 adjacency matrix, a name."""

    n: int
    adj: np.ndarray
    name: str = ""

    def __post_init__(self):
        adj = np.array(self.adj, dtype=np.uint8)
        if adj.shape != (self.n, self.n):
            raise ValueError("adj must be %d x %d" % (self.n, self.n))
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(adj > 1):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diagonal(adj)):
            raise ValueError("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def edge_count(self):
        return int(self.adj.sum()) // 2


def parse_dimacs(text, name=""):
    """Parse a DIMACS clique-format graph ("p edge n m" / "e i j" lines).

    Comments ("c ...") and blank lines are skipped. Duplicate edges collapse
    to one; a declared edge count that disagrees with the distinct count is
    a warning, not an error. Self-loops, vertices outside 1..n, unknown line
    types, or a missing problem line raise DimacsParseError with the 1-based
    line number.
    """
    n = None
    adj = None
    seen = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens or tokens[0] == "c":
            continue
        kind = tokens[0]
        if kind == "p":
            if n is not None:
                raise DimacsParseError("second problem line", lineno)
            if len(tokens) != 4 or tokens[1] != "edge":
                raise DimacsParseError(
                    "problem line must be 'p edge <n> <m>'", lineno
                )
            try:
                n, declared = int(tokens[2]), int(tokens[3])
            except ValueError:
                raise DimacsParseError("non-integer problem line fields", lineno) from None
            if n < 1 or declared < 0:
                raise DimacsParseError("vertex/edge counts out of range", lineno)
            adj = np.zeros((n, n), dtype=np.uint8)
        elif kind == "e":
            if adj is None:
                raise DimacsParseError("edge before problem line", lineno)
            if len(tokens) != 3:
                raise DimacsParseError("edge line must be 'e <i> <j>'", lineno)
            try:
                i, j = int(tokens[1]), int(tokens[2])
            except ValueError:
                raise DimacsParseError("non-integer edge endpoints", lineno) from None
            if not (1 <= i <= n and 1 <= j <= n):
                raise DimacsParseError(
                    "edge (%d, %d) outside vertices 1..%d" % (i, j, n), lineno
                )
            if i == j:
                raise DimacsParseError("self-loop at vertex %d" % i, lineno)
            if not adj[i - 1, j - 1]:
                seen += 1
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1
        else:
            raise DimacsParseError("unknown line type %r" % kind, lineno)
    if adj is None:
        raise DimacsParseError("no problem line found")
    if seen != declared:
        warnings.warn(
            "DIMACS header declares %d edges but %d distinct edges were read"
            % (declared, seen),
            stacklevel=2,
        )
    return Graph(n, adj, name)


def emit_dimacs(graph):
    """Canonical DIMACS clique text: problem line, then edges ascending."""
    lines = ["p edge %d %d" % (graph.n, graph.edge_count)]
    rows, cols = np.nonzero(np.triu(graph.adj))
    lines.extend("e %d %d" % (i + 1, j + 1) for i, j in zip(rows, cols))
    return "\n".join(lines) + "\n"


# Planted-instance shape: a 30-vertex graph whose last 10 vertices form a
# deliberately dense block (edge probability 7/8 vs 1/2 background), tied to
# the rest by exactly 8 cross edges.
PLANTED_N = 30
PLANTED_BLOCK = tuple(range(21, 31))
_BACKGROUND_P = 0.5
_BLOCK_P = 0.875
_CROSS_EDGES = 8


def planted_graph(seed):
    """A fresh planted dense-subgraph instance for a seed.

    Vertices 1..20 are Erdos-Renyi with edge probability 1/2, vertices 21..30
    are a dense block with edge probability 7/8, and exactly 8 cross edges
    pair 8 distinct left vertices with 8 distinct block vertices. The draw
    order below is part of the seeding contract; do not reorder.
    """
    rng = stream(seed, GRAPH)
    adj = np.zeros((PLANTED_N, PLANTED_N), dtype=np.uint8)
    for i in range(20):
        for j in range(i + 1, 20):
            if rng.random() < _BACKGROUND_P:
                adj[i, j] = adj[j, i] = 1
    for i in range(20, PLANTED_N):
        for j in range(i + 1, PLANTED_N):
            if rng.random() < _BLOCK_P:
                adj[i, j] = adj[j, i] = 1
    left = rng.choice(20, _CROSS_EDGES, replace=False)
    right = rng.choice(np.arange(20, PLANTED_N), _CROSS_EDGES, replace=False)
    for i, j in zip(left, right):
        adj[i, j] = adj[j, i] = 1
    return Graph(PLANTED_N, adj, "planted-%d" % seed)


def subgraph_edges(graph, vertices):
    """Edge count of the subgraph induced by 1-based ``vertices``."""
    verts = [int(v) for v in vertices]
    if len(set(verts)) != len(verts):
        raise ValueError("vertex list %r has duplicates" % (verts,))
    if any(not 1 <= v <= graph.n for v in verts):
        raise ValueError("vertices %r outside 1..%d" % (verts, graph.n))
    idx = np.array([v - 1 for v in verts], dtype=np.intp)
    return int(graph.adj[np.ix_(idx, idx)].sum()) // 2


@dataclass(frozen=True)
class EncodingParams:
    """How an adjacency matrix is scaled into squeezing values.

    Exactly one of the fields is set: either the scale c directly (must keep
    c * |lambda|_max < 1) or a target total mean photon number that the
    scale is solved for by bisection.
    """

    mean_photon_target: float = None
    scale: float = None

    def __post_init__(self):
        given = (self.mean_photon_target is not None) + (self.scale is not None)
        if given != 1:
            raise ValueError("set exactly one of mean_photon_target or scale")
        if self.mean_photon_target is not None and not self.mean_photon_target > 0:
            raise ValueError("mean_photon_target must be > 0")
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be > 0")


def _eigh_magnitudes(graph):
    lam, Q = np.linalg.eigh(graph.adj.astype(np.float64))
    return lam, np.abs(lam), Q


def encoding_scale(graph, params):
    """The scale c that EncodingParams resolves to for this graph.

    For a mean-photon target, c is bisected on (0, 1/|lambda|_max) against
    sum_i (c |lambda_i|)^2 / (1 - (c |lambda_i|)^2), which is monotone and
    unbounded, so any positive target is reachable.
    """
    _, mag, _ = _eigh_magnitudes(graph)
    amax = float(mag.max())
    if params.scale is not None:
        if amax > 0 and params.scale * amax >= 1.0:
            raise ValueError(
                "scale %g with |lambda|_max %g reaches squeezing >= infinity"
                % (params.scale, amax)
            )
        return float(params.scale)
    if amax == 0.0:
        raise ValueError("edgeless graph cannot meet a mean-photon target")
    lo, hi = 0.0, 1.0 / amax

    def nbar(c):
        x = (c * mag) ** 2
        return float(np.sum(x / (1.0 - x)))

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if nbar(mid) < params.mean_photon_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def encode_graph(graph, params):
    """Map a graph onto the Gaussian state whose samples favor its dense subgraphs.

    Eigendecompose A = Q diag(lambda) Q^T, absorb eigenvalue signs into
    column phases (U = Q diag(s), s_i = 1 or i), squeeze mode i by
    r_i = artanh(c |lambda_i|), and pass through U. Zero-mean pure state;
    total mean photon number is sum_i sinh^2(r_i).
    """
    lam, mag, Q = _eigh_magnitudes(graph)
    c = encoding_scale(graph, params)
    r = np.arctanh(c * mag)
    if not np.any(r > 0):
        return GaussianState(np.eye(2 * graph.n))
    U = Q * np.where(lam >= 0, 1.0, 1j)
    return apply_interferometer(squeezed_vacuum(r), U)


@dataclass(frozen=True)
class SearchTrace:
    """Best-so-far curve of one random search run.

    ``best_after[i]`` is the densest edge count seen in the first i+1
    samples; ``strategy`` and ``seed`` label where the samples came from.
    """

    best_after: tuple
    strategy: str = "unknown"
    seed: int = None

    @property
    def samples_used(self):
        return len(self.best_after)

    @property
    def best(self):
        return self.best_after[-1] if self.best_after else 0

    def series(self):
        """Iterate (samples, best_edges) rows, samples counting from 1."""
        return tuple((i + 1, b) for i, b in enumerate(self.best_after))

    def found_at(self, target_edges):
        """Samples consumed when ``target_edges`` was first reached, or None."""
        for i, b in enumerate(self.best_after):
            if b >= target_edges:
                return i + 1
        return None


def random_search(sample_source, graph, budget, strategy=None, seed=None, stop_at=None):
    """Keep the best subgraph over ``budget`` samples from a vertex-set source.

    The source yields tuples of 1-based vertices (all the same size); a
    source that runs dry (postselection budget exhausted) truncates the
    trace rather than failing. Strategy and seed labels default to the
    source's attributes of the same names. ``stop_at`` ends the search
    early once the running best reaches that edge count (a known
    optimum); by default the full budget is consumed.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    it = iter(sample_source)
    best = 0
    series = []
    size = None
    for _ in range(budget):
        try:
            verts = next(it)
        except StopIteration:
            break
        if size is None:
            size = len(verts)
        elif len(verts) != size:
            raise ValueError("sample sizes disagree: %d then %d" % (size, len(verts)))
        best = max(best, subgraph_edges(graph, verts))
        series.append(best)
        if stop_at is not None and best >= stop_at:
            break
    return SearchTrace(
        tuple(series),
        strategy if strategy is not None else getattr(sample_source, "strategy", "unknown"),
        seed if seed is not None else getattr(sample_source, "seed", None),
    )


class UniformSubgraphSource:
    """Uniformly random k-subsets of 1..n; the search baseline."""

    strategy = "uniform"

    def __init__(self, n, k, seed=0):
        if not 1 <= k <= n:
            raise ValueError("need 1 <= k <= n, got k=%d, n=%d" % (k, n))
        self.n = n
        self.k = k
        self.seed = seed
        self._rng = stream(seed, UNIFORM)

    def __iter__(self):
        return self

    def __next__(self):
        return tuple(sorted(self._rng.choice(self.n, self.k, replace=False) + 1))


def uniform_subgraph_source(n, k, seed=0):
    """Endless uniform k-subsets of 1..n (see UniformSubgraphSource)."""
    return UniformSubgraphSource(n, k, seed)


class GbsSubgraphSource:
    """k-vertex subgraphs from postselected threshold samples of the encoded graph.

    Wraps a postselected sample stream of the encoded (optionally lossy)
    state; each accepted pattern's clicked modes are the vertex set.
    Acceptance accounting is exposed for reporting.
    """

    strategy = "gbs"

    def __init__(self, graph, params=None, loss_db=0.0, k=1, seed=0, max_draws=None, execution=None):
        if params is None:
            params = EncodingParams(mean_photon_target=float(k))
        state = encode_graph(graph, params)
        if loss_db:
            state = apply_loss(state, loss_db_to_transmission(loss_db))
        self.seed = seed
        self.params = params
        self.loss_db = loss_db
        self._stream = postselected_sample_stream(
            state, MeasurementPlan(rng_seed=seed), k, max_draws, execution
        )

    @property
    def draws_attempted(self):
        return self._stream.draws_attempted

    @property
    def accepted_count(self):
        return self._stream.accepted_count

    @property
    def acceptance_fraction(self):
        return self._stream.acceptance_fraction

    @property
    def exhausted(self):
        return self._stream.exhausted

    def __iter__(self):
        return self

    def __next__(self):
        return next(self._stream).clicked_modes()


def gbs_subgraph_source(graph, params=None, loss_db=0.0, k=1, seed=0, max_draws=None, execution=None):
    """Vertex-set source backed by postselected sampling (see GbsSubgraphSource)."""
    return GbsSubgraphSource(graph, params, loss_db, k, seed, max_draws, execution)
