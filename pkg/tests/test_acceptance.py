"""End-to-end acceptance checks, one test per criterion.

Each test records a single [PASS]/[FAIL] line with its measured numbers
(echoed in the terminal summary). Value tolerances are asserted as stated;
wall-clock expectations were written for 8-core reference hardware, so
runtimes are reported in the lines rather than asserted.
"""

import itertools
import json
import os
import time

import numpy as np
import pytest

from tgbs import (
    ClickPattern,
    MeasurementPlan,
    ResourceModel,
    StepRecorder,
    enumerate_distribution,
    forced_chain,
    gbs_subgraph_source,
    inclusion_exclusion_prob,
    memory_at_step,
    parse_dimacs,
    planted_graph,
    random_search,
    reference_runtime_fit,
    sample,
    squeezed_vacuum,
    subgraph_edges,
    uniform_subgraph_source,
)
from tgbs.cli import main
from tgbs.graphs import PLANTED_BLOCK, PLANTED_N
from tgbs.resources import REFERENCE_MEMORY
from tgbs.streams import stream

from conftest import record_criterion
from helpers import LOSS_LEVELS_DB, pattern_index, prob_tol, random_instance

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


def report(number, ok, detail):
    line = "[%s] criterion %d: %s" % ("PASS" if ok else "FAIL", number, detail)
    record_criterion(line)
    print(line)
    assert ok, line


def test_criterion_1_chain_matches_brute_force():
    t0 = time.perf_counter()
    worst = 0.0
    worst_sum_err = 0.0
    for trial in range(50):
        rng = stream(1001, trial)
        n = 2 + trial % 7
        state = random_instance(rng, n, max_db=8.0, loss_db=LOSS_LEVELS_DB[trial % 4])
        table = enumerate_distribution(state)
        for pat, p in table.items():
            ie = inclusion_exclusion_prob(state, pat)
            worst = max(worst, abs(p - ie) / prob_tol(p, ie))
        worst_sum_err = max(worst_sum_err, abs(table.total() - 1.0))
    wall = time.perf_counter() - t0
    ok = worst <= 1.0 and worst_sum_err <= 1e-9
    report(
        1,
        ok,
        "50 instances, worst deviation %.3g of tolerance, worst sum error %.2g, %.1f s"
        % (worst, worst_sum_err, wall),
    )


def test_criterion_2_sampling_distribution():
    rng = stream(2002, 0)
    state = random_instance(rng, 4, max_db=7.0, loss_db=1.2)
    exact = enumerate_distribution(state)
    plan = MeasurementPlan(rng_seed=2024)
    n_draws = 1_000_000
    counts = np.zeros(16, dtype=np.int64)
    t0 = time.perf_counter()
    for i in range(n_draws):
        pat, _ = sample(state, plan, draw_index=i, validate=False)
        counts[pattern_index(pat.bits)] += 1
    wall = time.perf_counter() - t0
    tvd = 0.5 * float(np.abs(counts / n_draws - exact.probs).sum())
    ok = tvd < 0.01
    report(
        2,
        ok,
        "10^6 draws at 4 modes, TVD %.5f (< 0.01), %.0f s wall (single core)"
        % (tvd, wall),
    )


def test_criterion_3_memory_table():
    model = ResourceModel()
    rows = []
    ok = True
    for modes, clicks, published in REFERENCE_MEMORY:
        got = memory_at_step(model, modes, clicks, clicks)
        text = str(published)
        digits = len(text.split(".")[1]) if "." in text else 0
        ok = ok and abs(got - published) <= 10.0 ** (-digits)
        rows.append("%g" % got)
    report(3, ok, "model gives %s GB vs published table" % ", ".join(rows))


def test_criterion_4_click_ordering_governs_peak_memory():
    modes, clicks = 20, 5
    model = ResourceModel()
    state = squeezed_vacuum(np.full(modes, 0.55))
    # default order measures mode 20 first; clicks-first puts the five
    # clicks on the first measured modes, clicks-last on the final five
    first_bits = [0] * modes
    last_bits = [0] * modes
    for j in range(clicks):
        first_bits[modes - 1 - j] = 1
        last_bits[j] = 1
    peaks = {}
    series_exact = True
    for name, bits in (("first", first_bits), ("last", last_bits)):
        recorder = StepRecorder(model)
        res = forced_chain(state, ClickPattern(tuple(bits)), observer=recorder)
        assert res.feasible
        for step, clicks_so_far, branches, remaining, gb in recorder.rows:
            series_exact = series_exact and gb == memory_at_step(
                model, modes, clicks_so_far, step
            )
        peaks[name] = recorder.peak_gb
    ok = peaks["first"] > peaks["last"] and series_exact
    report(
        4,
        ok,
        "peak %.4g GB clicks-first vs %.4g GB clicks-last, per-step series formula-exact: %s"
        % (peaks["first"], peaks["last"], series_exact),
    )


def test_criterion_5_runtime_extrapolation():
    fit = reference_runtime_fit()
    extrapolated = fit.extrapolate(30)
    ratio = extrapolated / 1e9
    ok = 0.1 <= ratio <= 10.0
    report(
        5,
        ok,
        "log-linear fit extrapolates 30 clicks to %.4g cpu-hours, factor %.1f from 1e9"
        % (extrapolated, ratio),
    )


def test_criterion_6_branch_doubling_and_trace():
    kept = 0
    attempts = 0
    max_clicks = 0

    def observer(step, mode, outcome, clicks, branches, remaining):
        assert branches == 2 ** clicks

    while kept < 1000 and attempts < 3000:
        rng = stream(6001, attempts)
        n = 2 + attempts % 15
        state = random_instance(
            rng, n, max_db=6.0, loss_db=LOSS_LEVELS_DB[attempts % 4]
        )
        pat, _ = sample(
            state,
            MeasurementPlan(rng_seed=6001),
            draw_index=attempts,
            observer=observer,
            check_invariants=True,
        )
        attempts += 1
        if pat.n_clicks <= 8:
            kept += 1
            max_clicks = max(max_clicks, pat.n_clicks)
    ok = kept == 1000
    report(
        6,
        ok,
        "%d trajectories (%d sampled) kept branch count == 2^clicks and unit trace; max clicks %d"
        % (kept, attempts, max_clicks),
    )


def _averaged_traces(seeds, make_source, graph_for, budget):
    per_run = []
    for seed in seeds:
        graph = graph_for(seed)
        trace = random_search(make_source(graph, seed), graph, budget=budget)
        per_run.append(trace)
    common = min(t.samples_used for t in per_run)
    assert common > 0
    stacked = np.array([t.best_after[:common] for t in per_run], dtype=np.float64)
    return stacked.mean(axis=0), per_run


def test_criterion_7_planted_densest_search():
    k, budget = 10, 2000
    seeds = tuple(range(1, 21))
    t0 = time.perf_counter()

    gbs_mean, gbs_traces = _averaged_traces(
        seeds,
        lambda g, s: gbs_subgraph_source(g, k=k, seed=s, max_draws=500_000),
        planted_graph,
        budget,
    )
    uni_mean, _ = _averaged_traces(
        seeds,
        lambda g, s: uniform_subgraph_source(PLANTED_N, k, seed=s),
        planted_graph,
        budget,
    )
    hits = sum(
        1
        for s, t in zip(seeds, gbs_traces)
        if t.best >= subgraph_edges(planted_graph(s), PLANTED_BLOCK)
    )
    common = min(gbs_mean.size, uni_mean.size)
    dominates = bool(np.all(gbs_mean[:common] >= uni_mean[:common]))

    lossy_seeds = tuple(range(1, 6))
    lossy_budget = 150
    lossy_mean, _ = _averaged_traces(
        lossy_seeds,
        lambda g, s: gbs_subgraph_source(g, k=k, loss_db=6.0, seed=s, max_draws=500_000),
        planted_graph,
        lossy_budget,
    )
    lossy_uni, _ = _averaged_traces(
        lossy_seeds,
        lambda g, s: uniform_subgraph_source(PLANTED_N, k, seed=s),
        planted_graph,
        lossy_budget,
    )
    lossy_common = min(lossy_mean.size, lossy_uni.size)
    lossy_dominates = bool(np.all(lossy_mean[:lossy_common] >= lossy_uni[:lossy_common]))
    wall = time.perf_counter() - t0

    ok = hits >= 16 and dominates and lossy_dominates
    report(
        7,
        ok,
        "planted density found in %d/20 runs, trace dominates uniform at %d points, "
        "6 dB arm dominates at %d points, %.0f s wall (single core)"
        % (hits, common, lossy_common, wall),
    )


@pytest.mark.slow
def test_criterion_8_brock200_2_smoke():
    graph_path = os.path.join(DATA_DIR, "brock200_2.clq")
    clique_path = os.path.join(DATA_DIR, "brock200_2.clique")
    if os.environ.get("TGBS_RUN_SLOW") != "1" or not (
        os.path.exists(graph_path) and os.path.exists(clique_path)
    ):
        line = (
            "[SKIP] criterion 8: needs TGBS_RUN_SLOW=1 plus data/brock200_2.clq "
            "(DIMACS benchmark) and data/brock200_2.clique (the published "
            "12-clique vertices, whitespace separated)"
        )
        record_criterion(line)
        pytest.skip(line)

    with open(graph_path) as fh:
        graph = parse_dimacs(fh.read(), name="brock200_2")
    assert graph.n == 200
    with open(clique_path) as fh:
        clique = tuple(int(tok) for tok in fh.read().split())
    assert len(clique) == 12
    assert subgraph_edges(graph, clique) == 66

    k, budget, runs = 12, 200, 5
    gbs_best = []
    uni_best = []
    for run in range(runs):
        gbs = gbs_subgraph_source(graph, k=k, seed=run, max_draws=2_000_000)
        gbs_best.append(random_search(gbs, graph, budget=budget).best)
        uni = uniform_subgraph_source(graph.n, k, seed=run)
        uni_best.append(random_search(uni, graph, budget=budget).best)
    ok = float(np.mean(gbs_best)) >= float(np.mean(uni_best))
    report(
        8,
        ok,
        "brock200_2: mean best edges %.1f (device) vs %.1f (uniform) over %d runs"
        % (float(np.mean(gbs_best)), float(np.mean(uni_best)), runs),
    )


def _strip_wall_ms(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    out = [lines[0], lines[1]]
    for row in lines[2:]:
        fields = row.split(",")
        out.append(",".join(fields[:4] + fields[5:]))
    return out


def test_criterion_9_bit_identical_csv(tmp_path, capsys):
    sample_argv = [
        "sample",
        "--modes", "4",
        "--squeezing-db", "6",
        "--loss-db", "1.2",
        "--seed", "17",
        "--draws", "200",
    ]
    a = tmp_path / "sample_a.csv"
    b = tmp_path / "sample_b.csv"
    assert main(sample_argv + ["--out", str(a)]) == 0
    assert main(sample_argv + ["--out", str(b)]) == 0
    sample_same = _strip_wall_ms(a) == _strip_wall_ms(b)

    densest_argv = [
        "densest",
        "--graph", "planted:3",
        "--k", "3",
        "--budget", "30",
        "--runs", "2",
        "--seed", "8",
        "--max-draws", "100000",
    ]
    c = tmp_path / "trace_a.csv"
    d = tmp_path / "trace_b.csv"
    assert main(densest_argv + ["--trace-out", str(c)]) == 0
    assert main(densest_argv + ["--trace-out", str(d)]) == 0
    capsys.readouterr()
    densest_same = c.read_bytes() == d.read_bytes()

    ok = sample_same and densest_same
    report(
        9,
        ok,
        "repeat runs bit-identical: sample CSV %s (wall_ms column excluded), "
        "densest trace CSV %s" % (sample_same, densest_same),
    )
