"""Exact Gaussian boson sampling with threshold detectors.

The measurement chain keeps the exact conditional state as a signed mixture
of Gaussian branches (doubling on every click), which makes desk-scale exact
sampling, brute-force verification, resource modeling of large runs, and a
dense-subgraph search application all share one core.
"""

from .accumulate import Execution, chunked_sum
from .errors import (
    DimacsParseError,
    ImpossibleOutcomeError,
    NumericalDomainError,
    PrecisionError,
    TgbsError,
)
from .graphs import (
    EncodingParams,
    Graph,
    GbsSubgraphSource,
    SearchTrace,
    UniformSubgraphSource,
    emit_dimacs,
    encode_graph,
    encoding_scale,
    gbs_subgraph_source,
    parse_dimacs,
    planted_graph,
    random_search,
    subgraph_edges,
    uniform_subgraph_source,
)
from .oracle import (
    DistributionTable,
    enumerate_distribution,
    inclusion_exclusion_prob,
    multimode_vacuum_prob,
)
from .resources import (
    NodeCount,
    ResourceModel,
    RuntimeFit,
    StepRecorder,
    fit_runtime,
    measure_live_peak,
    memory_at_step,
    node_count,
    peak_memory_worst_case,
    reference_runtime_fit,
    worst_case_step_series,
)
from .sampler import (
    ChainResult,
    ClickPattern,
    MeasurementPlan,
    PostselectedStream,
    StateMixture,
    WeightedBranch,
    forced_chain,
    init_mixture,
    measure_mode,
    no_click_probability,
    pattern_probability,
    postselected_sample_stream,
    sample,
)
from .states import (
    GaussianState,
    ModeBlocks,
    apply_interferometer,
    apply_loss,
    assert_physical,
    conditional_no_click_update,
    haar_unitary,
    interferometer_symplectic,
    loss_db_to_transmission,
    mean_photon_number,
    partition_mode,
    reassemble,
    squeezed_vacuum,
    squeezing_db_to_r,
    symplectic_eigenvalues,
    symplectic_form,
    vacuum_overlap_prob,
    vacuum_state,
)

__version__ = "0.1.0"
