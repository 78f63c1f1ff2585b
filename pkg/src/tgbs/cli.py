"""Command line front end.

Subcommands:

* ``sample``: draw threshold samples from a squeezed-light + Haar
  interferometer device, optionally postselected or with forced outcomes.
* ``oracle-check``: cross-validate the chain sampler against the
  inclusion-exclusion formula on random small instances.
* ``estimate``: memory/node requirements and runtime extrapolation from the
  closed-form model.
* ``densest``: dense-subgraph random search on a planted or DIMACS graph.
* ``bench``: walltime and peak-memory instrumentation of forced chains.

Every CSV written starts with a ``# config: {...}`` line echoing the exact
resolved configuration as JSON. Outputs are bit-identical across runs for a
fixed seed and chunk size except for wall-clock columns.

Exit codes: 0 success, 1 usage or validation error, 2 numerical failure
(precision or domain), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .accumulate import Execution
from .errors import (
    DimacsParseError,
    ImpossibleOutcomeError,
    NumericalDomainError,
    PrecisionError,
)
from .graphs import (
    EncodingParams,
    PLANTED_BLOCK,
    encoding_scale,
    gbs_subgraph_source,
    parse_dimacs,
    planted_graph,
    random_search,
    subgraph_edges,
    uniform_subgraph_source,
)
from .oracle import enumerate_distribution, inclusion_exclusion_prob
from .resources import (
    REFERENCE_MEMORY,
    REFERENCE_RUNS,
    ResourceModel,
    StepRecorder,
    node_count,
    peak_memory_worst_case,
    reference_runtime_fit,
    worst_case_step_series,
)
from .sampler import (
    ClickPattern,
    MeasurementPlan,
    forced_chain,
    postselected_sample_stream,
    sample,
)
from .states import (
    apply_interferometer,
    apply_loss,
    assert_physical,
    haar_unitary,
    loss_db_to_transmission,
    squeezed_vacuum,
    squeezing_db_to_r,
)
from .streams import BENCH, INTERFEROMETER, RUN, derive_seed, stream

# Matching-tolerance constants for oracle-check verdicts.
_REL_TOL = 1e-9
_ABS_TOL = 1e-12


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one CLI invocation, as echoed to outputs."""

    command: str
    options: dict

    def to_json(self):
        from . import __version__

        return json.dumps(
            {"command": self.command, "version": __version__, **self.options},
            sort_keys=True,
        )


def _write_csv(path, config, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# config: %s\n" % config.to_json())
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc


class _IoFailure(Exception):
    pass


def _device_state(modes, squeezing_db, loss_db, seed):
    # The benchmark device family: uniform squeezing, Haar interferometer,
    # then uniform loss.
    r = squeezing_db_to_r(squeezing_db)
    state = squeezed_vacuum(np.full(modes, r))
    state = apply_interferometer(state, haar_unitary(modes, stream(seed, INTERFEROMETER)))
    if loss_db:
        state = apply_loss(state, loss_db_to_transmission(loss_db))
    return state


def _execution(args):
    return Execution(
        workers=args.workers, chunk_size=args.chunk_size, precision=args.precision
    )


def _add_execution_flags(parser):
    parser.add_argument(
        "--workers",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="worker threads per step (default: available cores; never affects results)",
    )
    parser.add_argument("--chunk-size", type=int, default=4096, help="branches per reduction chunk (affects bit-level results)")
    parser.add_argument("--precision", choices=("fsum", "dd"), default="fsum", help="accumulator for signed coefficient sums")


def cmd_sample(args):
    config = RunConfig(
        "sample",
        {
            "modes": args.modes,
            "squeezing_db": args.squeezing_db,
            "loss_db": args.loss_db,
            "seed": args.seed,
            "draws": args.draws,
            "clicks": args.clicks,
            "max_draws": args.max_draws,
            "forced": args.forced,
            "workers": args.workers,
            "chunk_size": args.chunk_size,
            "precision": args.precision,
        },
    )
    print("config: %s" % config.to_json())
    state = _device_state(args.modes, args.squeezing_db, args.loss_db, args.seed)
    assert_physical(state)
    ex = _execution(args)

    if args.forced is not None:
        pattern = ClickPattern.from_bitstring(args.forced)
        if len(pattern.bits) != args.modes:
            raise ValueError(
                "forced pattern has %d bits for %d modes" % (len(pattern.bits), args.modes)
            )
        result = forced_chain(state, pattern, execution=ex, validate=False)
        print(
            json.dumps(
                {
                    "pattern": pattern.bitstring(),
                    "probability": result.probability,
                    "feasible": result.feasible,
                    "peak_branch_count": result.peak_branches,
                },
                sort_keys=True,
            )
        )
        return 0

    plan = MeasurementPlan(rng_seed=args.seed)
    rows = []
    wall = []
    peak_overall = 1
    if args.clicks is None:
        recorder = StepRecorder()
        for i in range(args.draws):
            recorder.reset()
            t0 = time.perf_counter()
            pattern, joint = sample(
                state, plan, draw_index=i, execution=ex, observer=recorder, validate=False
            )
            ms = 1e3 * (time.perf_counter() - t0)
            wall.append(ms)
            peak = recorder.peak_branches
            peak_overall = max(peak_overall, peak)
            rows.append(
                (i, pattern.bitstring(), pattern.n_clicks, repr(joint), "%.3f" % ms, peak)
            )
        accepted = args.draws
        attempted = args.draws
    else:
        stream_ = postselected_sample_stream(
            state, plan, args.clicks, max_draws=args.max_draws, execution=ex
        )
        t_prev = time.perf_counter()
        for pattern in stream_:
            t_now = time.perf_counter()
            ms = 1e3 * (t_now - t_prev)  # includes the rejected draws in between
            t_prev = t_now
            wall.append(ms)
            peak_overall = max(peak_overall, stream_.last_peak_branches)
            rows.append(
                (
                    len(rows),
                    pattern.bitstring(),
                    pattern.n_clicks,
                    repr(stream_.last_joint_prob),
                    "%.3f" % ms,
                    stream_.last_peak_branches,
                )
            )
            if len(rows) >= args.draws:
                break
        accepted = len(rows)
        attempted = stream_.draws_attempted
        if stream_.exhausted:
            print(
                "note: draw budget exhausted with %d of %d requested samples"
                % (accepted, args.draws)
            )

    if args.out:
        _write_csv(
            args.out,
            config,
            ("draw_index", "pattern", "n_clicks", "joint_prob", "wall_ms", "peak_branch_count"),
            rows,
        )
        print("wrote %d rows to %s" % (len(rows), args.out))
    summary = {
        "samples": accepted,
        "draws_attempted": attempted,
        "acceptance_fraction": (accepted / attempted) if attempted else None,
        "peak_branch_count": peak_overall,
        "wall_ms_p50": float(np.percentile(wall, 50)) if wall else None,
    }
    print("summary: %s" % json.dumps(summary, sort_keys=True))
    return 0


def cmd_oracle_check(args):
    config = RunConfig(
        "oracle-check",
        {"modes": args.modes, "trials": args.trials, "seed": args.seed},
    )
    print("config: %s" % config.to_json())
    loss_cycle = (0.0, 1.2, 3.0, 6.0)
    rows = []
    worst = 0.0
    r_max = squeezing_db_to_r(8.0)
    for t in range(args.trials):
        rng = stream(args.seed, RUN, t)
        r = rng.uniform(0.1, r_max, size=args.modes)
        loss_db = loss_cycle[t % len(loss_cycle)]
        state = apply_interferometer(
            squeezed_vacuum(r), haar_unitary(args.modes, stream(args.seed, INTERFEROMETER, t))
        )
        if loss_db:
            state = apply_loss(state, loss_db_to_transmission(loss_db))
        table = enumerate_distribution(state)
        trial_worst = 0.0
        for pattern, chain_p in table.items():
            ie_p = inclusion_exclusion_prob(state, pattern)
            excess = abs(chain_p - ie_p) / max(_REL_TOL * max(abs(chain_p), abs(ie_p)), _ABS_TOL)
            trial_worst = max(trial_worst, excess)
        total = table.total()
        rows.append((t, loss_db, repr(trial_worst), repr(total)))
        worst = max(worst, trial_worst)
        if abs(total - 1.0) > 1e-9:
            worst = float("inf")
    if args.out:
        _write_csv(
            args.out, config, ("trial", "loss_db", "worst_excess_ratio", "distribution_sum"), rows
        )
    ok = worst <= 1.0
    print(
        "%s: worst error / tolerance ratio %.3g over %d trials"
        % ("PASS" if ok else "FAIL", worst, args.trials)
    )
    if not ok:
        raise PrecisionError("oracle cross-check failed (ratio %.3g)" % worst)
    return 0


def cmd_estimate(args):
    model = ResourceModel(
        eta=args.eta,
        bytes_per_scalar=args.bytes_per_scalar,
        node_memory_gb=args.node_gb,
    )
    config = RunConfig(
        "estimate",
        {
            "modes": args.modes,
            "clicks": args.clicks,
            "eta": args.eta,
            "bytes_per_scalar": args.bytes_per_scalar,
            "node_gb": args.node_gb,
        },
    )
    print("config: %s" % config.to_json())
    peak = peak_memory_worst_case(model, args.modes, args.clicks)
    nodes = node_count(model, peak)
    print("peak memory (worst case, clicks first): %g GB" % peak)
    print("nodes needed: %d minimum, %d as a power of two" % (nodes.minimum, nodes.power_of_two))
    for modes, clicks, gb in REFERENCE_MEMORY:
        if (modes, clicks) == (args.modes, args.clicks):
            print("published reference peak for this size: %g GB" % gb)
    for modes, clicks, ref_nodes, cpu_h, wall_h in REFERENCE_RUNS:
        if (modes, clicks) == (args.modes, args.clicks):
            print(
                "published reference allocation: %d nodes, %.2f CPU-hours, %.2f h walltime"
                % (ref_nodes, cpu_h, wall_h)
            )
    fit = reference_runtime_fit()
    print(
        "runtime fit on reference runs: log2(cpu_hours) = %.6f * clicks + %.6f"
        % (fit.slope, fit.intercept)
    )
    print("extrapolated cpu-hours at this click count: %.6g" % fit.extrapolate(args.clicks))
    series = worst_case_step_series(model, args.modes, args.clicks)
    if args.csv:
        _write_csv(
            args.csv,
            config,
            ("step", "clicks_so_far", "memory_gb"),
            [(k, m, repr(gb)) for k, m, gb in series],
        )
        print("wrote per-step series to %s" % args.csv)
    elif args.modes <= 64:
        print("step  clicks  memory_gb")
        for k, m, gb in series:
            print("%4d  %6d  %.6g" % (k, m, gb))
    else:
        print("(per-step series suppressed for %d steps; use --csv)" % (args.modes + 1))
    return 0


def _resolve_graph(arg):
    if arg.startswith("planted:"):
        return planted_graph(int(arg.split(":", 1)[1]))
    path = Path(arg)
    try:
        text = path.read_text()
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    return parse_dimacs(text, name=path.stem)


def cmd_densest(args):
    graph = _resolve_graph(args.graph)
    params = None
    if args.scale is not None:
        params = EncodingParams(scale=args.scale)
    elif args.mean_photons is not None:
        params = EncodingParams(mean_photon_target=args.mean_photons)
    config = RunConfig(
        "densest",
        {
            "graph": args.graph,
            "graph_name": graph.name,
            "n_vertices": graph.n,
            "k": args.k,
            "strategy": args.strategy,
            "loss_db": args.loss_db,
            "budget": args.budget,
            "runs": args.runs,
            "seed": args.seed,
            "max_draws": args.max_draws,
            "mean_photons": args.mean_photons,
            "scale": args.scale,
        },
    )
    print("config: %s" % config.to_json())
    if args.strategy == "gbs":
        eff = params if params is not None else EncodingParams(mean_photon_target=float(args.k))
        print("encoding scale c: %.6g" % encoding_scale(graph, eff))

    traces = []
    acceptance = []
    for run in range(args.runs):
        run_seed = derive_seed(args.seed, RUN, run)
        if args.strategy == "uniform":
            source = uniform_subgraph_source(graph.n, args.k, run_seed)
        else:
            source = gbs_subgraph_source(
                graph,
                params=params,
                loss_db=args.loss_db,
                k=args.k,
                seed=run_seed,
                max_draws=args.max_draws,
            )
        trace = random_search(source, graph, args.budget, seed=run_seed)
        traces.append(trace)
        if args.strategy == "gbs":
            acceptance.append(source.acceptance_fraction)
            if source.exhausted:
                print(
                    "note: run %d exhausted %d draws at %d accepted samples"
                    % (run, args.max_draws, trace.samples_used)
                )

    rows = []
    if args.runs == 1:
        for samples, best in traces[0].series():
            rows.append((samples, best, traces[0].strategy, traces[0].seed))
    else:
        # Averaged trace over the common budget prefix.
        span = min(t.samples_used for t in traces)
        for i in range(span):
            mean_best = float(np.mean([t.best_after[i] for t in traces]))
            rows.append((i + 1, repr(mean_best), args.strategy, args.seed))
    if args.trace_out:
        _write_csv(args.trace_out, config, ("samples", "best_edges", "strategy", "seed"), rows)
        print("wrote %d trace rows to %s" % (len(rows), args.trace_out))

    summary = {
        "best_edges_per_run": [t.best for t in traces],
        "mean_best_edges": float(np.mean([t.best for t in traces])),
        "samples_per_run": [t.samples_used for t in traces],
    }
    if acceptance:
        summary["acceptance_fraction_per_run"] = acceptance
    if graph.name.startswith("planted-"):
        planted_edges = subgraph_edges(graph, PLANTED_BLOCK)
        summary["planted_block_edges"] = planted_edges
        summary["runs_reaching_planted"] = sum(
            1 for t in traces if t.found_at(planted_edges) is not None
        )
    print("summary: %s" % json.dumps(summary, sort_keys=True))
    return 0


def cmd_bench(args):
    config = RunConfig(
        "bench",
        {
            "modes": args.modes,
            "clicks_list": args.clicks_list,
            "trials": args.trials,
            "seed": args.seed,
            "squeezing_db": args.squeezing_db,
        },
    )
    print("config: %s" % config.to_json())
    clicks_list = [int(c) for c in args.clicks_list.split(",")]
    if any(not 0 <= c <= args.modes for c in clicks_list):
        raise ValueError("clicks must lie in 0..%d" % args.modes)
    state = _device_state(args.modes, args.squeezing_db, 0.0, args.seed)
    assert_physical(state)
    rows = []
    for clicks in clicks_list:
        walls = []
        for trial in range(args.trials):
            rng = stream(args.seed, BENCH, clicks, trial)
            where = rng.choice(args.modes, size=clicks, replace=False)
            bits = [0] * args.modes
            for w in where:
                bits[int(w)] = 1
            recorder = StepRecorder()
            t0 = time.perf_counter()
            result = forced_chain(
                state, tuple(bits), validate=False, observer=recorder
            )
            ms = 1e3 * (time.perf_counter() - t0)
            walls.append(ms)
            rows.append(
                (
                    args.modes,
                    clicks,
                    trial,
                    "%.3f" % ms,
                    repr(result.probability),
                    result.peak_branches,
                    repr(recorder.peak_gb),
                )
            )
        print(
            "clicks %2d: mean %.2f ms, max %.2f ms over %d trials"
            % (clicks, float(np.mean(walls)), float(np.max(walls)), args.trials)
        )
    if args.out:
        _write_csv(
            args.out,
            config,
            ("modes", "clicks", "trial", "wall_ms", "joint_prob", "peak_branch_count", "peak_modeled_gb"),
            rows,
        )
        print("wrote %d rows to %s" % (len(rows), args.out))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tgbs",
        description="Exact threshold-detector Gaussian boson sampling, resource estimation, and dense-subgraph search.",
        epilog=(
            "conventions: hbar=2 (vacuum covariance = identity); squeezing "
            "r = dB*ln(10)/20; loss transmission T = 10^(-dB/10), applied after "
            "the interferometer; memory model eta=2 with 16 bytes per scalar "
            "(worst-case planning) unless overridden"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw threshold samples from a squeezed + Haar device")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--squeezing-db", type=float, default=8.0, help="per-mode squeezing in dB")
    p.add_argument("--loss-db", type=float, default=0.0, help="uniform loss in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=10)
    p.add_argument("--clicks", type=int, default=None, help="postselect on this click count")
    p.add_argument("--max-draws", type=int, default=1_000_000, help="draw budget for postselection")
    p.add_argument("--forced", type=str, default=None, help="evaluate one forced pattern (bitstring) instead of sampling")
    p.add_argument("--out", type=str, default=None, help="CSV output path")
    _add_execution_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("oracle-check", help="cross-validate the sampler against inclusion-exclusion")
    p.add_argument("--modes", type=int, default=5)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("estimate", help="memory, node and runtime estimates from the closed-form model")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--clicks", type=int, required=True)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--bytes-per-scalar", type=int, default=16)
    p.add_argument("--node-gb", type=float, default=32.0, help="memory per compute node in GB")
    p.add_argument("--csv", type=str, default=None, help="write the per-step series here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("densest", help="random search for dense k-subgraphs")
    p.add_argument("--graph", type=str, required=True, help="'planted:SEED' or a DIMACS file path")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--strategy", choices=("gbs", "uniform"), default="gbs")
    p.add_argument("--loss-db", type=float, default=0.0)
    p.add_argument("--budget", type=int, default=1000, help="samples per run")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-draws", type=int, default=1_000_000, help="postselection draw budget per run")
    p.add_argument("--mean-photons", type=float, default=None, help="encoding mean photon target (default: k)")
    p.add_argument("--scale", type=float, default=None, help="encoding scale c (overrides --mean-photons)")
    p.add_argument("--trace-out", type=str, default=None, help="CSV path for the best-so-far trace")
    p.set_defaults(func=cmd_densest)

    p = sub.add_parser("bench", help="time forced chains and record peak memory")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--clicks-list", type=str, default="2,4,6")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--squeezing-db", type=float, default=8.0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ValueError, DimacsParseError, ImpossibleOutcomeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (NumericalDomainError, PrecisionError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 2
    except _IoFailure as exc:
        print("i/o failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
