"""Abstraction-refinement loop around the solver.

``find_preimage`` solves an instance whose first steps are abstracted, checks
each candidate by hashing forward, blocks the candidate's intermediate words
and restores the abstracted steps the candidate violated, until a candidate
hashes to the target.
"""
from __future__ import annotations

import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import sha1
from .encoder import CCDB, Instance, blocking_clause, encode_instance, reencode, refine
from .solver import Solver, SolverConfig, SolverStats

log = logging.getLogger(__name__)


@dataclass
class CegarConfig:
    abstract_k: int = 0
    mode: str = "identity"
    mask: dict[int, bool] = field(default_factory=dict)
    padding: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    conflict_budget: int | None = None
    time_budget: float | None = None
    clear_on_blocked: bool = True
    incremental: bool = False
    allow_deep_abstraction: bool = False


@dataclass
class Iteration:
    iteration: int
    abstracted: list[int]
    result: str
    verdict: str
    conflicts: int
    wall: float
    elapsed: float
    candidate: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CegarResult:
    status: str  # solved | timeout | blocked | unsat
    preimage: tuple[int, ...] | None
    target: tuple[int, ...]
    nsteps: int
    iterations: list[Iteration]
    refinements: list[tuple[int, int]]  # (|abstracted| before, after)
    stats: SolverStats
    wall: float

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    @property
    def spurious_candidates(self) -> list[str]:
        return [it.candidate for it in self.iterations if it.verdict == "spurious" and it.candidate]


def check(w: Sequence[int], h: Sequence[int], nsteps: int) -> tuple[bool, sha1.StepTrace]:
    """Forward-hash ``w``; valid iff the digest equals ``h``."""
    digest, trace = sha1.compress(sha1.IV, w, nsteps)
    return tuple(digest) == tuple(h), trace


def _merge_stats(total: SolverStats, part: SolverStats, base: SolverStats | None = None) -> None:
    b = base or SolverStats()
    total.conflicts += part.conflicts - b.conflicts
    total.decisions += part.decisions - b.decisions
    total.propagations += part.propagations - b.propagations
    total.restarts += part.restarts - b.restarts
    total.learnt += part.learnt - b.learnt
    total.reductions += part.reductions - b.reductions
    total.wall += part.wall - b.wall
    for k, v in part.restarts_per_arm.items():
        total.restarts_per_arm[k] = total.restarts_per_arm.get(k, 0) + v - b.restarts_per_arm.get(k, 0)
    for k, v in part.reward_per_arm.items():
        total.reward_per_arm[k] = total.reward_per_arm.get(k, 0.0) + v - b.reward_per_arm.get(k, 0.0)


def _snapshot(stats: SolverStats) -> SolverStats:
    return SolverStats(stats.conflicts, stats.decisions, stats.propagations, stats.restarts,
                       dict(stats.restarts_per_arm), dict(stats.reward_per_arm), stats.learnt,
                       stats.reductions, stats.wall)


def find_preimage(h: Sequence[int], nsteps: int, config: CegarConfig | None = None,
                  on_iteration: Callable[[Iteration], None] | None = None,
                  cancel: threading.Event | None = None) -> CegarResult:
    config = config or CegarConfig()
    h = tuple(h)
    t0 = time.perf_counter()
    inst = encode_instance(h, nsteps, abstract_k=config.abstract_k, mask=config.mask, padding=config.padding,
                           mode=config.mode, allow_deep_abstraction=config.allow_deep_abstraction)
    ccdb = CCDB()
    iterations: list[Iteration] = []
    refinements: list[tuple[int, int]] = []
    total = SolverStats()
    cleared = False
    seen: set[str] = set()
    solver: Solver | None = None
    solver_inst: Instance | None = None
    added = 0

    def finish(status: str, pre: tuple[int, ...] | None = None) -> CegarResult:
        return CegarResult(status, pre, h, nsteps, iterations, refinements, total, time.perf_counter() - t0)

    while True:
        if cancel is not None and cancel.is_set():
            return finish("timeout")
        conflict_budget = None
        if config.conflict_budget is not None:
            conflict_budget = config.conflict_budget - total.conflicts
            if conflict_budget <= 0:
                return finish("timeout")
        time_budget = None
        if config.time_budget is not None:
            time_budget = config.time_budget - (time.perf_counter() - t0)
            if time_budget <= 0:
                return finish("timeout")

        if solver is None or solver_inst is not inst or not config.incremental:
            solver = Solver(inst.formula, config=config.solver)
            solver_inst = inst
            added = 0
        blockers = ccdb.clauses(inst)
        solver.add_clauses(blockers[added:])
        added = len(blockers)
        before = _snapshot(solver.stats)
        ts = time.perf_counter()
        if cancel is not None:
            watcher = threading.Thread(target=_relay_cancel, args=(cancel, solver), daemon=True)
            watcher.start()
        res = solver.solve(conflict_budget=conflict_budget, time_budget=time_budget)
        _merge_stats(total, solver.stats, before)
        it = Iteration(len(iterations) + 1, sorted(inst.abstracted), res.status, "", solver.stats.conflicts - before.conflicts,
                       time.perf_counter() - ts, time.perf_counter() - t0)
        iterations.append(it)

        if res.status == "UNKNOWN":
            it.verdict = "timeout"
            _emit(on_iteration, it)
            return finish("timeout")

        if res.status == "UNSAT":
            if len(ccdb):
                if config.clear_on_blocked and not cleared:
                    it.verdict = "blocked-retry"
                    _emit(on_iteration, it)
                    ccdb.clear()
                    cleared = True
                    solver = None
                    continue
                it.verdict = "blocked"
                _emit(on_iteration, it)
                return finish("blocked")
            if inst.abstracted:
                # identity abstraction is not an over-approximation; fall back to the full instance
                it.verdict = "abstraction-unsat"
                _emit(on_iteration, it)
                refinements.append((len(inst.abstracted), 0))
                inst = reencode(inst, abstracted=frozenset())
                continue
            it.verdict = "unsat"
            _emit(on_iteration, it)
            return finish("unsat")

        w = inst.decode_block(res.model)
        valid, trace = check(w, h, nsteps)
        it.candidate = sha1.block_to_hex(w)
        if valid:
            it.verdict = "valid"
            _emit(on_iteration, it)
            # never hand back an unverified block
            if sha1.compress(sha1.IV, w, nsteps)[0] != h:
                raise AssertionError("preimage failed re-verification")
            return finish("solved", tuple(w))

        it.verdict = "spurious"
        if it.candidate in seen:
            it.verdict = "spurious-repeat"
            log.warning("candidate %s repeated", it.candidate)
        seen.add(it.candidate)
        _emit(on_iteration, it)
        ccdb.add(blocking_clause(trace, nsteps))
        if not inst.abstracted:
            raise AssertionError("unabstracted instance produced a block that does not hash to the target")
        before_k = len(inst.abstracted)
        inst = refine(inst, w, res.model)
        refinements.append((before_k, len(inst.abstracted)))


def _relay_cancel(event: threading.Event, solver: Solver) -> None:
    while not event.wait(0.2):
        if not solver._lock.locked():
            return
    solver.cancel()


def _emit(cb: Callable[[Iteration], None] | None, it: Iteration) -> None:
    log.info("iteration %d abstracted=%s result=%s verdict=%s conflicts=%d t=%.2fs",
             it.iteration, it.abstracted, it.result, it.verdict, it.conflicts, it.elapsed)
    if cb is not None:
        cb(it)


# -- campaigns ---------------------------------------------------------------------

def campaign_targets(nsteps: int, n_targets: int, seed: int, target_mode: str = "block") -> list[tuple[tuple[int, ...] | None, tuple[int, ...]]]:
    """Seeded (source block, target) pairs.

    ``block`` mode hashes random blocks so every target is reachable;
    ``bits`` mode draws 160 random bits (source block ``None``).
    """
    rng = random.Random(seed)
    out = []
    for _ in range(n_targets):
        if target_mode == "block":
            block = tuple(rng.getrandbits(32) for _ in range(16))
            out.append((block, sha1.sha1_block(block, nsteps)))
        elif target_mode == "bits":
            out.append((None, tuple(rng.getrandbits(32) for _ in range(5))))
        else:
            raise ValueError(f"unknown target mode {target_mode!r}")
    return out


@dataclass
class TargetRecord:
    index: int
    nsteps: int
    target: str
    source: str | None
    status: str
    verified: bool
    wall: float
    conflicts: int
    iterations: int
    refinements: int
    preimage: str | None
    restarts_per_arm: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CampaignReport:
    nsteps: int
    seed: int
    records: list[TargetRecord]
    results: list[CegarResult] = field(default_factory=list, repr=False)

    @property
    def solved(self) -> int:
        return sum(r.verified for r in self.records)

    def cactus(self) -> list[float]:
        """Sorted wall times of verified solves."""
        return sorted(r.wall for r in self.records if r.verified)

    def table(self) -> str:
        lines = [f"{'#':>3} {'status':8} {'wall[s]':>9} {'conflicts':>10} {'iters':>5}  target"]
        for r in self.records:
            lines.append(f"{r.index:>3} {r.status:8} {r.wall:9.2f} {r.conflicts:10d} {r.iterations:5d}  {r.target}")
        lines.append(f"solved {self.solved}/{len(self.records)}")
        return "\n".join(lines)


def run_campaign(nsteps: int, n_targets: int, seed: int, config: CegarConfig | None = None, *,
                 jobs: int = 1, target_mode: str = "block",
                 on_record: Callable[[TargetRecord], None] | None = None) -> CampaignReport:
    """Invert ``n_targets`` seeded targets; per-target timeouts do not stop the campaign."""
    config = config or CegarConfig()
    targets = campaign_targets(nsteps, n_targets, seed, target_mode)
    lock = threading.Lock()

    def one(i: int) -> tuple[TargetRecord, CegarResult]:
        source, target = targets[i]
        res = find_preimage(target, nsteps, config)
        verified = res.solved and check(res.preimage, target, nsteps)[0]
        rec = TargetRecord(
            index=i, nsteps=nsteps, target=sha1.digest_to_hex(target),
            source=sha1.block_to_hex(source) if source else None, status=res.status, verified=verified,
            wall=res.wall, conflicts=res.stats.conflicts, iterations=len(res.iterations),
            refinements=len(res.refinements),
            preimage=sha1.block_to_hex(res.preimage) if res.preimage else None,
            restarts_per_arm=dict(res.stats.restarts_per_arm),
        )
        if on_record is not None:
            with lock:
                on_record(rec)
        return rec, res

    if jobs <= 1:
        pairs = [one(i) for i in range(n_targets)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(one, range(n_targets)))
    return CampaignReport(nsteps, seed, [p[0] for p in pairs], [p[1] for p in pairs])
