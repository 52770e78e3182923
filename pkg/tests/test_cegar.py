import random
import time

import pytest

from hashinvert import cegar, sha1
from hashinvert.cegar import CegarConfig, campaign_targets, check, find_preimage, run_campaign
from hashinvert.encoder import Blocker, block_mask


def rand_block(rng):
    return tuple(rng.getrandbits(32) for _ in range(16))


def test_check_examples():
    rng = random.Random(0)
    for nsteps in (1, 20, 23, 80):
        w = rand_block(rng)
        h = sha1.compress(sha1.IV, w, nsteps)[0]
        valid, trace = check(w, h, nsteps)
        assert valid and trace.nsteps == nsteps
        flipped = (h[0] ^ 1,) + h[1:]
        valid, trace = check(w, flipped, nsteps)
        assert not valid and trace.digest == h


def test_check_random_pairs():
    rng = random.Random(1)
    for _ in range(200):
        nsteps = rng.randint(1, 80)
        w = rand_block(rng)
        h = sha1.sha1_block(w, nsteps) if rng.random() < 0.5 else tuple(rng.getrandbits(32) for _ in range(5))
        assert check(w, h, nsteps)[0] == (sha1.sha1_block(w, nsteps) == h)


def test_direct_solve_at_twenty_steps():
    _, target = campaign_targets(20, 1, 5)[0]
    res = find_preimage(target, 20, CegarConfig())
    assert res.solved and check(res.preimage, target, 20)[0]
    assert [it.verdict for it in res.iterations] == ["valid"]
    assert res.refinements == []


def assert_loop_invariants(res, k):
    before = [b for b, _ in res.refinements]
    assert all(after < b for b, after in res.refinements)
    assert before == sorted(before, reverse=True)
    assert len(res.refinements) <= k
    candidates = res.spurious_candidates
    assert len(candidates) == len(set(candidates))
    assert not any(it.verdict == "spurious-repeat" for it in res.iterations)


@pytest.mark.parametrize("mode", ["identity", "free"])
def test_abstraction_loop_reaches_a_verified_preimage(mode):
    rng = random.Random(2)
    for _ in range(3):
        target = sha1.sha1_block(rand_block(rng), 14)
        cfg = CegarConfig(abstract_k=3, mode=mode, allow_deep_abstraction=True)
        res = find_preimage(target, 14, cfg)
        assert res.solved and check(res.preimage, target, 14)[0]
        assert_loop_invariants(res, 3)
        assert any(it.verdict == "spurious" for it in res.iterations)


def test_incremental_flag_gives_a_verified_preimage():
    rng = random.Random(3)
    target = sha1.sha1_block(rand_block(rng), 14)
    res = find_preimage(target, 14, CegarConfig(abstract_k=2, allow_deep_abstraction=True, incremental=True))
    assert res.solved and check(res.preimage, target, 14)[0]


def test_unreachable_target_reports_unsat():
    rng = random.Random(4)
    block, other = rand_block(rng), rand_block(rng)
    target = sha1.sha1_block(other, 16)
    res = find_preimage(target, 16, CegarConfig(mask=block_mask(block)))
    assert res.status == "unsat" and res.preimage is None


def test_abstraction_unsat_falls_back_to_the_full_instance():
    # with every message bit pinned the identity-abstracted instance is UNSAT
    rng = random.Random(5)
    block = rand_block(rng)
    target = sha1.sha1_block(block, 21)
    res = find_preimage(target, 21, CegarConfig(abstract_k=1, mask=block_mask(block)))
    assert res.solved and res.preimage == block
    assert [it.verdict for it in res.iterations] == ["abstraction-unsat", "valid"]


def overblocking(monkeypatch):
    # a blocker over state[0].a, which is the constant IV word, excludes every model
    monkeypatch.setattr(cegar, "blocking_clause", lambda trace, nsteps: Blocker(((0, sha1.IV[0]),)))


def test_blocked_instance_is_retried_with_cleared_ccdb(monkeypatch):
    overblocking(monkeypatch)
    rng = random.Random(6)
    target = sha1.sha1_block(rand_block(rng), 14)
    res = find_preimage(target, 14, CegarConfig(abstract_k=2, allow_deep_abstraction=True))
    verdicts = [it.verdict for it in res.iterations]
    assert "blocked-retry" in verdicts
    assert res.solved and check(res.preimage, target, 14)[0]


def test_blocked_without_retry_is_not_reported_as_unsat(monkeypatch):
    overblocking(monkeypatch)
    rng = random.Random(6)
    target = sha1.sha1_block(rand_block(rng), 14)
    res = find_preimage(target, 14, CegarConfig(abstract_k=2, allow_deep_abstraction=True, clear_on_blocked=False))
    assert res.status == "blocked" and res.preimage is None


def test_conflict_budget_gives_timeout():
    _, target = campaign_targets(21, 1, 0)[0]
    res = find_preimage(target, 21, CegarConfig(abstract_k=1, conflict_budget=1))
    assert res.status == "timeout" and res.preimage is None
    assert res.iterations[-1].verdict == "timeout"
    assert res.stats.conflicts <= 1


def test_time_budget_gives_timeout():
    _, target = campaign_targets(22, 1, 0)[0]
    t0 = time.perf_counter()
    res = find_preimage(target, 22, CegarConfig(time_budget=1.0))
    assert res.status == "timeout"
    assert time.perf_counter() - t0 < 10


def test_campaign_targets_are_seeded():
    a = campaign_targets(20, 5, 42)
    assert a == campaign_targets(20, 5, 42)
    assert a != campaign_targets(20, 5, 43)
    for block, target in a:
        assert sha1.sha1_block(block, 20) == target
    bits = campaign_targets(20, 3, 42, target_mode="bits")
    assert all(src is None and len(t) == 5 for src, t in bits)
    with pytest.raises(ValueError):
        campaign_targets(20, 1, 0, target_mode="other")


def test_sixteen_step_campaign_is_fast():
    t0 = time.perf_counter()
    report = run_campaign(16, 25, seed=1)
    assert time.perf_counter() - t0 < 60
    assert report.solved == 25
    assert all(r.verified and r.status == "solved" for r in report.records)
    assert report.cactus() == sorted(r.wall for r in report.records)
    assert "solved 25/25" in report.table()


def test_campaign_with_worker_pool_matches_sequential():
    seen = []
    seq = run_campaign(12, 4, seed=2, config=CegarConfig(conflict_budget=20000))
    par = run_campaign(12, 4, seed=2, config=CegarConfig(conflict_budget=20000), jobs=2, on_record=seen.append)
    assert [r.status for r in seq.records] == [r.status for r in par.records]
    assert [r.preimage for r in seq.records] == [r.preimage for r in par.records]
    assert sorted(r.index for r in seen) == [0, 1, 2, 3]


def test_campaign_records_timeouts_and_continues():
    report = run_campaign(21, 2, seed=3, config=CegarConfig(conflict_budget=10))
    assert [r.status for r in report.records] == ["timeout", "timeout"]
    assert report.solved == 0 and report.cactus() == []
