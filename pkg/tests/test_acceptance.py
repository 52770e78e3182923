"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints at the
end of the run. Campaign artifacts (JSONL records, cactus files) land in
``acceptance_out/`` next to this directory.
"""
import hashlib
import json
import random
import statistics
import time
from pathlib import Path

import pytest

from conftest import record_criterion
from test_solver import brute_force_sat, random_cnf

from hashinvert import sha1
from hashinvert.cegar import CegarConfig, check, run_campaign
from hashinvert.encoder import block_mask, encode_instance
from hashinvert.solver import Solver, SolverConfig
from hashinvert.solver.restarts import POLICY_KINDS, DiscountedUCB

OUT = Path(__file__).resolve().parent.parent / "acceptance_out"

EASY_SEED = 20
CEGAR_SEED = 21
REFINE_SEED = 22
REFINE_CONFLICT_BUDGET = 60_000


def dump(name, report):
    OUT.mkdir(exist_ok=True)
    with open(OUT / f"{name}.jsonl", "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    (OUT / f"{name}.cactus.txt").write_text("".join(f"{t:.3f}\n" for t in report.cactus()))


@pytest.fixture(scope="module")
def easy_mab_campaign():
    report = run_campaign(20, 25, EASY_SEED, CegarConfig(solver=SolverConfig(restart="mab")))
    dump("easy_n20_mab", report)
    return report


@pytest.fixture(scope="module")
def cegar_campaign():
    cfg = CegarConfig(abstract_k=1, time_budget=7200.0)
    report = run_campaign(21, 25, CEGAR_SEED, cfg)
    dump("cegar_n21_k1", report)
    with open(OUT / "cegar_n21_k1.iterations.jsonl", "w") as fh:
        for i, res in enumerate(report.results):
            for it in res.iterations:
                fh.write(json.dumps({"target": i, **it.to_dict()}, sort_keys=True) + "\n")
    return report


def test_criterion_1_fips_vector():
    block = sha1.pad_bytes(b"abc")
    digest = sha1.digest_to_hex(sha1.sha1_block(block, 80))
    times = []
    for _ in range(50):
        t0 = time.perf_counter()
        sha1.sha1_block(block, 80)
        times.append(time.perf_counter() - t0)
    median = statistics.median(times)
    ok = (digest == "a9993e364706816aba3e25717850c26c9cd0d89d" == hashlib.sha1(b"abc").hexdigest()
          and median < 1e-3)
    record_criterion(1, ok, f"digest {digest}, median {median * 1e3:.3f} ms")
    assert ok


def test_criterion_2_forward_consistency():
    rng = random.Random(2)
    t0 = time.perf_counter()
    bad = []
    for nsteps in (1, 16, 20, 21, 23):
        for i in range(100):
            block = tuple(rng.getrandbits(32) for _ in range(16))
            ref = sha1.sha1_block(block, nsteps)
            inst = encode_instance(ref, nsteps, mask=block_mask(block))
            res = Solver(inst.formula).solve()
            if not res.sat or inst.decode_digest(res.model) != ref or inst.decode_block(res.model) != block:
                bad.append((nsteps, i))
            if i < 10:
                # a digest one bit off must be refuted under the same pinning
                wrong = (ref[0] ^ (1 << rng.randrange(32)),) + ref[1:]
                inst = encode_instance(wrong, nsteps, mask=block_mask(block))
                if Solver(inst.formula).solve().status != "UNSAT":
                    bad.append((nsteps, i, "flip"))
    wall = time.perf_counter() - t0
    ok = not bad and wall < 300
    record_criterion(2, ok, f"500 pinned solves, {len(bad)} mismatches, {wall:.1f} s")
    assert ok, bad[:10]


def test_criterion_3_solver_oracle():
    rng = random.Random(3)
    t0 = time.perf_counter()
    mismatches = 0
    n_sat = 0
    for _ in range(1000):
        clauses = random_cnf(rng, 20, 85)
        expected = brute_force_sat(20, clauses)
        got = Solver(num_vars=20, clauses=clauses).solve()
        n_sat += expected
        if got.status != ("SAT" if expected else "UNSAT"):
            mismatches += 1
        elif got.sat:
            assert all(any(got.model[abs(l)] == (l > 0) for l in c) for c in clauses)
    wall = time.perf_counter() - t0
    ok = mismatches == 0 and wall < 120
    record_criterion(3, ok, f"1000 formulas ({n_sat} SAT), {mismatches} mismatches, {wall:.1f} s")
    assert ok


def test_criterion_4_easy_regime(easy_mab_campaign):
    report = easy_mab_campaign
    walls = [r.wall for r in report.records]
    median = statistics.median(walls)
    ok = report.solved == 25 and median <= 60
    record_criterion(4, ok, f"{report.solved}/25 verified at 20 steps, median {median:.2f} s")
    assert ok


def test_criterion_5_cegar_twenty_one_steps(cegar_campaign):
    report = cegar_campaign
    sound = all(check(res.preimage, res.target, 21)[0] for res in report.results if res.preimage is not None)
    ok = report.solved >= 20 and sound
    statuses = {s: sum(r.status == s for r in report.records) for s in {r.status for r in report.records}}
    record_criterion(5, ok, f"{report.solved}/25 verified, all preimages sound: {sound}, statuses {statuses}, "
                            f"median {statistics.median(r.wall for r in report.records):.0f} s")
    assert ok


def bandit_frequency(seed, swap):
    rng = random.Random(seed)
    mab = DiscountedUCB(gamma=0.99, xi=0.5)
    means = [0.9, 0.3, 0.3, 0.3]
    best = 0
    picks = []
    for i in range(10_000):
        if swap and i == 5000:
            means, best = [0.3, 0.3, 0.9, 0.3], 2
        arm = mab.select()
        mab.update_reward(arm, 1.0 if rng.random() < means[arm] else 0.0)
        picks.append(arm)
    return picks[-1000:].count(best) / 1000


def test_criterion_6_mab_adaptivity():
    t0 = time.perf_counter()
    stationary = [bandit_frequency(s, False) for s in range(5)]
    swapped = [bandit_frequency(s, True) for s in range(5)]
    wall = time.perf_counter() - t0
    ok = min(stationary) >= 0.8 and min(swapped) >= 0.8 and wall < 10
    record_criterion(6, ok, f"stationary min {min(stationary):.3f}, after swap min {min(swapped):.3f}, {wall:.2f} s")
    assert ok


def test_criterion_7_restart_comparison(easy_mab_campaign):
    totals = {}
    for kind in POLICY_KINDS:
        report = run_campaign(20, 25, EASY_SEED, CegarConfig(solver=SolverConfig(restart=kind)))
        dump(f"easy_n20_{kind}", report)
        assert report.solved == 25
        totals[kind] = sum(r.conflicts for r in report.records)
    mab_total = sum(r.conflicts for r in easy_mab_campaign.records)
    best = min(totals, key=totals.get)
    ratio = mab_total / totals[best]
    ok = ratio <= 1.5
    record_criterion(7, ok, f"mab {mab_total} conflicts vs best fixed {best} {totals[best]} "
                            f"(ratio {ratio:.2f}); all {totals}")
    assert ok


def test_criterion_8_refinement_progress():
    cfg = CegarConfig(abstract_k=2, conflict_budget=REFINE_CONFLICT_BUDGET)
    report = run_campaign(22, 50, REFINE_SEED, cfg)
    dump("refine_n22_k2", report)
    violations = []
    for i, res in enumerate(report.results):
        sizes = [2] + [after for _, after in res.refinements]
        befores = [b for b, _ in res.refinements]
        if len(res.refinements) > 2 or any(b >= a for a, b in zip(sizes, sizes[1:])) or befores != sizes[:-1]:
            violations.append(i)
        if res.preimage is not None and not check(res.preimage, res.target, 22)[0]:
            violations.append(i)
    refined = sum(bool(res.refinements) for res in report.results)
    ok = not violations and refined > 0
    record_criterion(8, ok, f"50 runs, {refined} with refinements, {report.solved} solved within "
                            f"{REFINE_CONFLICT_BUDGET} conflicts, violations {violations}")
    assert ok


def test_criterion_9_no_repeated_spurious_block(cegar_campaign):
    repeats = []
    spurious = 0
    for i, res in enumerate(cegar_campaign.results):
        blocks = res.spurious_candidates
        spurious += len(blocks)
        if len(blocks) != len(set(blocks)) or any(it.verdict == "spurious-repeat" for it in res.iterations):
            repeats.append(i)
    ok = not repeats
    record_criterion(9, ok, f"{spurious} spurious candidates across 25 runs, runs with repeats {repeats}")
    assert ok
