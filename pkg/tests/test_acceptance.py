"""
Acceptance suite. Each test checks one criterion at its stated tolerance and
prints a single PASS/FAIL line before asserting.

The four-component runs (50 seeds) are shared by criteria 1 to 3; the
nine-component runs (20 seeds) by criterion 7.
"""

import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from castro.cli import main as cli_main
from castro.conditioned import SamplerConfig, greedy_pairing, repair_pairing, repair_pairing_gt3
from castro.errors import CastroWarning
from castro.lhs import Engine, RngStream
from castro.metrics import centered_l2_discrepancy, wraparound_l2_discrepancy
from castro.permutations import run_all_permutations
from castro.pipeline import PipelineOptions, run_pipeline
from castro.problem import load_experiment_csv, load_problem_config
from castro.synthesis import apply_onehot_synthesis, apply_pair_synthesis

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SEEDS_4D = range(50)
SEEDS_9D = range(20)


def report(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


def _quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CastroWarning)
        return fn(*args, **kwargs)


@pytest.fixture(scope="module")
def case4():
    spec = load_problem_config(SCENARIOS / "case_4d.json")
    data = load_experiment_csv(SCENARIOS / "case_4d_data.csv", spec)
    runs = []
    for seed in SEEDS_4D:
        t0 = time.perf_counter()
        res = _quiet(run_pipeline, spec, data, PipelineOptions(seed=seed))
        runs.append((res, time.perf_counter() - t0))
    return spec, data, runs


@pytest.fixture(scope="module")
def case9():
    spec = load_problem_config(SCENARIOS / "case_9d.json")
    data = load_experiment_csv(SCENARIOS / "case_9d_data.csv", spec)
    return spec, data, [_quiet(run_pipeline, spec, data, PipelineOptions(seed=s)) for s in SEEDS_9D]


def _bound_arrays(bounds):
    return np.array([b.lower for b in bounds]), np.array([b.upper for b in bounds])


def test_criterion_1_feasibility(case4, capsys):
    spec, _, runs = case4
    lo, hi = _bound_arrays(spec.components)
    violations, rows_checked, slowest = 0, 0, 0.0
    for res, seconds in runs:
        slowest = max(slowest, seconds)
        for engine in Engine:
            blocks = [res.subproblems[engine][0].pool, res.recommendations[engine].raw_rows]
            for rows in blocks:
                rows_checked += rows.shape[0]
                bad = np.abs(rows.sum(axis=1) - 1.0) > 1e-12
                bad |= np.any((rows < lo) | (rows > hi), axis=1)
                violations += int(bad.sum())
    ok = violations == 0 and slowest < 10.0
    report(capsys, 1, ok, f"{violations} violations in {rows_checked} rows over {len(runs)} seeds; "
                          f"slowest seed {slowest:.2f} s (limit 10 s)")


def _yield_share(counts, floor=85):
    return float(np.mean(np.asarray(counts) >= floor))


def _subproblem_yields(spec, sub, seeds):
    cfg = SamplerConfig.from_budget(spec.sampling_budget(sub), math.factorial(sub.dim),
                                    max_rej=spec.rejection_allowance(sub))
    counts = {e: [] for e in Engine}
    for seed in seeds:
        pool = run_all_permutations(sub.bounds, cfg, RngStream(seed))
        for e in Engine:
            counts[e].append(pool.samples[e].shape[0])
    return counts


def test_criterion_2_yield(case4, capsys):
    _, _, runs = case4
    spec9 = load_problem_config(SCENARIOS / "case_9d.json")
    amino, metal = spec9.groups
    yields = {
        "4-D": ({e: [r.subproblems[e][0].raw_pool_size for r, _ in runs] for e in Engine}, 0.90),
        "amino": (_subproblem_yields(spec9, amino, range(50)), 0.80),
        "metal": (_subproblem_yields(spec9, metal, range(50)), 0.90),
    }
    parts, ok = [], True
    for name, (counts, need) in yields.items():
        for e in Engine:
            share = _yield_share(counts[e])
            ok &= share >= need
            parts.append(f"{name} {e.label} {share:.0%} (median {int(np.median(counts[e]))}, "
                         f"need {need:.0%})")
    report(capsys, 2, ok, "share of seeds with >= 85 rows: " + "; ".join(parts))


def test_criterion_3_metric_ordering(case4, capsys):
    _, _, runs = case4
    cd_ok = wd_ok = 0
    variances = []
    for res, _ in runs:
        sel, both, pool = res.recommendations[Engine.LHS].metrics
        cd_ok += pool.cd < sel.cd < both.cd
        wd_ok += pool.wd < sel.wd < both.wd
        variances.append(pool.variance)
    n = len(runs)
    var_dev = max(abs(v - 1 / 12) for v in variances)
    ok = cd_ok / n >= 0.9 and wd_ok / n >= 0.9 and var_dev <= 0.03
    report(capsys, 3, ok, f"CD pool<15<15+data in {cd_ok}/{n}, WD in {wd_ok}/{n} (need 90%); "
                          f"pool variance within 1/12 +- {var_dev:.4f} (limit 0.03)")


def _cd_loops(x):
    n, d = x.shape
    s1 = sum(math.prod(1 + 0.5 * abs(x[i, k] - 0.5) - 0.5 * abs(x[i, k] - 0.5) ** 2
                       for k in range(d)) for i in range(n))
    s2 = sum(math.prod(1 + 0.5 * abs(x[i, k] - 0.5) + 0.5 * abs(x[j, k] - 0.5)
                       - 0.5 * abs(x[i, k] - x[j, k]) for k in range(d))
             for i in range(n) for j in range(n))
    return math.sqrt((13 / 12) ** d - 2 / n * s1 + s2 / n ** 2)


def _wd_loops(x):
    n, d = x.shape
    s = sum(math.prod(1.5 - abs(x[i, k] - x[j, k]) * (1 - abs(x[i, k] - x[j, k]))
                      for k in range(d)) for i in range(n) for j in range(n))
    return math.sqrt(-(4 / 3) ** d + s / n ** 2)


def test_criterion_4_discrepancy_oracles(capsys):
    gen = np.random.default_rng(2024)
    single_cd = abs(centered_l2_discrepancy([[0.5]]) - math.sqrt(1 / 12))
    single_wd = max(abs(wraparound_l2_discrepancy([[x]]) - math.sqrt(1 / 6)) for x in gen.random(20))
    oracle_err, shift_err = 0.0, 0.0
    for _ in range(20):
        x = gen.random((int(gen.integers(2, 17)), int(gen.integers(1, 6))))
        oracle_err = max(oracle_err, abs(centered_l2_discrepancy(x) - _cd_loops(x)),
                         abs(wraparound_l2_discrepancy(x) - _wd_loops(x)))
        shifted = (x + gen.random(x.shape[1])) % 1.0
        shift_err = max(shift_err, abs(wraparound_l2_discrepancy(shifted) - wraparound_l2_discrepancy(x)))
    ok = single_cd <= 1e-12 and single_wd <= 1e-12 and oracle_err <= 1e-12 and shift_err <= 1e-10
    report(capsys, 4, ok, f"single-point CD err {single_cd:.1e}, WD err {single_wd:.1e}; "
                          f"oracle err {oracle_err:.1e} (tol 1e-12); shift err {shift_err:.1e} (tol 1e-10)")


def _max_matching(ok):
    n_left, n_right = ok.shape

    def best(i, used):
        if i == n_left:
            return 0
        top = best(i + 1, used)
        for k in range(n_right):
            if ok[i, k] and not used >> k & 1:
                top = max(top, 1 + best(i + 1, used | 1 << k))
        return top

    return best(0, 0)


def test_criterion_5_pairing(capsys):
    gen = np.random.default_rng(5)
    failures, duplicates, repaired_gain = 0, 0, 0

    def on_step(state):
        nonlocal duplicates
        if len(set(state.left)) != len(state.left) or len(set(state.right)) != len(state.right):
            duplicates += 1
        state.check()

    for inst in range(200):
        n = int(gen.integers(1, 7))
        third = inst % 2 == 1
        # draws like those of the sampler: loose bounds make conflicts likely
        left = gen.uniform(0, 0.9, n)
        right = gen.uniform(0, 0.9, n)
        m = left[:, None] + right[None, :]
        state = greedy_pairing(m, positive=third)
        greedy = state.matched
        if third:
            repair_pairing_gt3(state, n, 0, gen, on_step=on_step)
        else:
            repair_pairing(state, n, gen, on_step=on_step)
        on_step(state)
        ok_mask = (m <= 1) & (m > 0) if third else m <= 1
        best = _max_matching(ok_mask)
        failures += not greedy <= state.matched <= best
        repaired_gain += state.matched - greedy
    ok = failures == 0 and duplicates == 0
    report(capsys, 5, ok, f"200 instances: {failures} outside [greedy, maximum], {duplicates} "
                          f"duplicate-index states; repair added {repaired_gain} pairs in total")


def test_criterion_6_synthesis(capsys):
    spec9 = load_problem_config(SCENARIOS / "case_9d.json")
    amino, metal = spec9.groups
    allowed = {(i,) for i in amino.synthesis.allowed_singles}
    allowed |= {tuple(sorted(p)) for p in amino.synthesis.allowed_pairs}
    gen = np.random.default_rng(6)

    rows = gen.dirichlet(np.ones(4), size=10_000)
    sparse = gen.random(rows.shape) < 0.25
    rows[:5000] = np.where(sparse[:5000], 0.0, rows[:5000])
    empty = rows.sum(axis=1) == 0
    rows[empty, 0] = 1.0
    rows /= rows.sum(axis=1, keepdims=True)
    amino_bad = 0
    for r in rows:
        out = apply_pair_synthesis(r, amino.synthesis).row
        amino_bad += tuple(np.flatnonzero(out)) not in allowed or out.sum() != 1.0

    metal_bad = 0
    for r in gen.dirichlet(np.ones(3), size=10_000):
        out = apply_onehot_synthesis(r).row
        metal_bad += not (np.count_nonzero(out) == 1 and out.max() == 1.0 and out.sum() == 1.0)

    hand1 = apply_pair_synthesis([0.3, 0.05, 0.05, 0.6], amino.synthesis).row.tolist()
    hand2 = apply_pair_synthesis([0.1, 0.35, 0.0, 0.55], amino.synthesis).row.tolist()
    hand_ok = hand1 == [1 / 3, 0.0, 0.0, 2 / 3] and hand2 == [0.0, 0.0, 0.0, 1.0]
    ok = amino_bad == 0 and metal_bad == 0 and hand_ok
    report(capsys, 6, ok, f"amino violations {amino_bad}/10000, metal violations {metal_bad}/10000; "
                          f"hand cases {'reproduced' if hand_ok else f'{hand1} {hand2}'}")


def test_criterion_7_nine_component_pipeline(case9, capsys):
    spec, _, runs = case9
    amino, metal = spec.groups
    allowed = {(i,) for i in amino.synthesis.allowed_singles}
    allowed |= {tuple(sorted(p)) for p in amino.synthesis.allowed_pairs}
    half = 0.0005
    violations, wrong_count = 0, 0
    wd_order = cd_order = 0
    for res in runs:
        for engine in Engine:
            rec = res.recommendations[engine]
            rows = rec.rows
            wrong_count += rows.shape[0] != 15
            units = np.rint(rows * 1000).astype(int)
            for r, u in zip(rows, units):
                bad = u.sum() != 1000
                for g in spec.groups:
                    tot = r[list(g.member_indices)].sum()
                    bad |= not g.aggregate.lower - 2 * half <= tot <= g.aggregate.upper + 2 * half
                for j in (0, 1):
                    c = spec.components[j]
                    bad |= not c.lower - half <= r[j] <= c.upper + half
                bad |= np.count_nonzero(r[list(metal.member_indices)]) > 1
                support = tuple(np.flatnonzero(r[list(amino.member_indices)]))
                bad |= bool(support) and support not in allowed
                violations += bool(bad)
            sel, both, pool = rec.metrics
            wd_order += pool.wd < sel.wd < both.wd
            cd_order += sel.cd < both.cd
    n = 2 * len(runs)
    ok = violations == 0 and wrong_count == 0 and wd_order / n >= 0.8 and cd_order / n >= 0.8
    report(capsys, 7, ok, f"{violations} violating rows, {wrong_count} runs without 15 rows over "
                          f"{len(runs)} seeds x 2 engines; WD pool<15<15+data {wd_order}/{n}, "
                          f"CD 15<15+data {cd_order}/{n} (need 80%)")


def _cli_outputs(tmp_path, tag, config, data, workers):
    out = tmp_path / tag
    rc = _quiet(cli_main, ["sample", "--config", str(config), "--data", str(data), "--out", str(out),
                           "--seed", "11", "--workers", str(workers)])
    assert rc == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_8_determinism(tmp_path, capsys):
    details, ok = [], True
    for case in ("4d", "9d"):
        cfg, data = SCENARIOS / f"case_{case}.json", SCENARIOS / f"case_{case}_data.csv"
        first = _cli_outputs(tmp_path, f"{case}-a", cfg, data, 1)
        second = _cli_outputs(tmp_path, f"{case}-b", cfg, data, 1)
        threaded = _cli_outputs(tmp_path, f"{case}-c", cfg, data, 8)
        same = first == second == threaded
        ok &= same and len(first) == 3
        details.append(f"{case}: {len(first)} files {'identical' if same else 'DIFFER'}")
    report(capsys, 8, ok, "two runs and 1 vs 8 threads, " + "; ".join(details))
