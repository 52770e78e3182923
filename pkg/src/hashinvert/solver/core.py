from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..cnf import Formula
from . import _kernel as K
from .restarts import POLICY_KINDS, DiscountedUCB, RestartPolicy

RESTART_MODES = POLICY_KINDS + ("mab",)


@dataclass
class SolverConfig:
    restart: str = "mab"
    gamma: float = 0.99
    xi: float = 0.5
    reward_bound: float = 0.5
    uniform_base: int = 512
    geo_base: float = 100.0
    geo_factor: float = 1.5
    var_decay: float = 0.95
    clause_decay: float = 0.999
    reduce_base: int = 2000
    reduce_inc: int = 300
    chunk: int = 2000

    def __post_init__(self) -> None:
        if self.restart not in RESTART_MODES:
            raise ValueError(f"restart must be one of {RESTART_MODES}, got {self.restart!r}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.uniform_base <= 0 or self.geo_base <= 0 or self.geo_factor < 1:
            raise ValueError("restart bases must be positive and geo_factor >= 1")


@dataclass
class SolverStats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    restarts_per_arm: dict[str, int] = field(default_factory=dict)
    reward_per_arm: dict[str, float] = field(default_factory=dict)
    learnt: int = 0
    reductions: int = 0
    wall: float = 0.0

    def to_dict(self) -> dict:
        return {
            "conflicts": self.conflicts,
            "decisions": self.decisions,
            "propagations": self.propagations,
            "restarts": self.restarts,
            "restarts_per_arm": dict(self.restarts_per_arm),
            "reward_per_arm": dict(self.reward_per_arm),
            "learnt": self.learnt,
            "reductions": self.reductions,
            "wall": self.wall,
        }


@dataclass
class SolveResult:
    status: str  # "SAT", "UNSAT" or "UNKNOWN"
    model: dict[int, bool] | None = None
    failed_assumptions: list[int] = field(default_factory=list)
    stats: SolverStats = field(default_factory=SolverStats)

    @property
    def sat(self) -> bool:
        return self.status == "SAT"

    def model_lines(self, width: int = 10) -> list[str]:
        """Model as DIMACS ``v`` lines ending with ``0``."""
        if self.model is None:
            return []
        lits = [v if self.model[v] else -v for v in sorted(self.model)]
        lits.append(0)
        return ["v " + " ".join(map(str, lits[i:i + width])) for i in range(0, len(lits), width)]


def _to_internal(lit: int) -> int:
    v = abs(lit) - 1
    return 2 * v + (1 if lit < 0 else 0)


def _to_dimacs(code: int) -> int:
    v = (code >> 1) + 1
    return -v if code & 1 else v


def compute_lbd(levels: Iterable[int]) -> int:
    """Number of distinct decision levels among a clause's literals."""
    levels = list(levels)
    if not levels:
        raise ValueError("LBD of an empty clause is undefined")
    return len(set(levels))


class Solver:
    """CDCL solver with restart policies arbitrated by a discounted-UCB bandit.

    Clauses use DIMACS literals. Clauses can be added between ``solve`` calls;
    learnt clauses are kept across calls.
    """

    def __init__(self, formula: Formula | None = None, *, num_vars: int = 0,
                 clauses: Iterable[Sequence[int]] = (), config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.original: list[tuple[int, ...]] = []
        if formula is not None:
            num_vars = max(num_vars, formula.num_vars)
            clauses = list(formula.clauses) + list(clauses)
        clauses = [tuple(c) for c in clauses]
        for c in clauses:
            for lit in c:
                num_vars = max(num_vars, abs(lit))
        self.num_vars = num_vars
        self._alloc(num_vars, clauses)
        self.policies = [RestartPolicy(kind, base=self.config.uniform_base, geo_base=self.config.geo_base,
                                       geo_factor=self.config.geo_factor) for kind in POLICY_KINDS]
        self.mab = DiscountedUCB(len(POLICY_KINDS), gamma=self.config.gamma, xi=self.config.xi,
                                 bound=self.config.reward_bound)
        self.stats = SolverStats(restarts_per_arm={k: 0 for k in POLICY_KINDS},
                                 reward_per_arm={k: 0.0 for k in POLICY_KINDS})
        self.cancel_flag = np.zeros(1, np.uint8)
        self._lock = threading.Lock()
        self._last_conflict = -1
        self.add_clauses(clauses)

    # -- allocation ----------------------------------------------------------

    def _alloc(self, n: int, clauses: list[tuple[int, ...]]) -> None:
        nlits = sum(len(c) for c in clauses)
        ncl = len(clauses)
        slots = max(1024, 2 * ncl)
        arena = max(4096, 2 * nlits + 4 * n)
        pool = 8 * (2 * ncl + nlits) + 16 * n + 8192
        S = np.zeros(K.NUM_S, np.int64)
        S[K.NVARS] = n
        S[K.OK] = 1
        S[K.REDUCE_BASE] = self.config.reduce_base
        S[K.REDUCE_INC] = self.config.reduce_inc
        S[K.NEXT_REDUCE] = self.config.reduce_base
        F = np.zeros(K.NUM_F)
        F[K.VAR_INC] = 1.0
        F[K.CLA_INC] = 1.0
        F[K.VAR_DECAY] = self.config.var_decay
        F[K.CLA_DECAY] = self.config.clause_decay
        heap = np.arange(n, dtype=np.int32)
        S[K.HEAP_SIZE] = n
        self.st = K.SolverArrays(
            val=np.zeros(2 * n, np.int8),
            level=np.zeros(n, np.int32),
            reason=np.full(n, -1, np.int32),
            trail=np.zeros(n, np.int32),
            trail_lim=np.zeros(n + 1, np.int32),
            phase=np.ones(n, np.int8),
            activity=np.zeros(n),
            heap=heap,
            heap_pos=np.arange(n, dtype=np.int32),
            cl_lits=np.zeros(arena, np.int32),
            cl_start=np.zeros(slots, np.int64),
            cl_size=np.zeros(slots, np.int32),
            cl_flags=np.zeros(slots, np.int8),
            cl_lbd=np.zeros(slots, np.int32),
            cl_act=np.zeros(slots),
            free_slots=np.zeros(slots, np.int32),
            w_off=np.zeros(2 * n, np.int64),
            w_len=np.zeros(2 * n, np.int32),
            w_cap=np.zeros(2 * n, np.int32),
            w_cls=np.zeros(pool, np.int32),
            w_blk=np.zeros(pool, np.int32),
            seen=np.zeros(n, np.int8),
            buf=np.zeros(n + 1, np.int32),
            stack=np.zeros(n + 1, np.int32),
            toclear=np.zeros(n + 1, np.int32),
            lvl_stamp=np.zeros(n + 2, np.int64),
            S=S,
            F=F,
        )

    def _grow(self, extra_lits: int = 0, extra_clauses: int = 0) -> None:
        st = self.st
        S = st.S
        n = self.num_vars
        nslots = int(S[K.NSLOTS])
        repl = {}
        if S[K.NFREE] + (len(st.cl_start) - nslots) < extra_clauses + 1:
            new = max(2 * len(st.cl_start), nslots + extra_clauses + 1024)
            for name in ("cl_start", "cl_size", "cl_flags", "cl_lbd", "cl_act", "free_slots"):
                old = getattr(st, name)
                arr = np.zeros(new, old.dtype)
                arr[:len(old)] = old
                repl[name] = arr
            st = st._replace(**repl)
            repl = {}
        live = int(S[K.ARENA_TOP] - S[K.ARENA_WASTED])
        need = live + extra_lits + n + 2
        if len(st.cl_lits) - S[K.ARENA_TOP] < extra_lits + n + 2 or S[K.ARENA_WASTED] > live:
            size = max(len(st.cl_lits), 2 * need)
            new_lits = np.zeros(size, np.int32)
            top = K.compact_arena(st.cl_lits, st.cl_start, st.cl_size, st.cl_flags, nslots, new_lits)
            S[K.ARENA_TOP] = top
            S[K.ARENA_WASTED] = 0
            repl["cl_lits"] = new_lits
        st = st._replace(**repl)
        live = int(S[K.ARENA_TOP] - S[K.ARENA_WASTED])
        pool_need = 4 * (2 * (S[K.NWATCHED] + extra_clauses) + live + extra_lits) + 16 * n + 4096
        if len(st.w_cls) - S[K.POOL_TOP] < pool_need:
            used = int(np.maximum(4, 2 * st.w_len.astype(np.int64)).sum())
            size = max(len(st.w_cls), used + 2 * pool_need)
            new_cls = np.zeros(size, np.int32)
            new_blk = np.zeros(size, np.int32)
            S[K.POOL_TOP] = K.compact_pool(st.w_off, st.w_len, st.w_cap, st.w_cls, st.w_blk, new_cls, new_blk)
            st = st._replace(w_cls=new_cls, w_blk=new_blk)
        self.st = st

    # -- clauses ---------------------------------------------------------------

    def add_clause(self, lits: Sequence[int]) -> None:
        self.add_clauses([lits])

    def add_clauses(self, clauses: Iterable[Sequence[int]]) -> None:
        clauses = [tuple(c) for c in clauses]
        if not clauses:
            return
        for c in clauses:
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} outside 1..{self.num_vars}")
        self.original.extend(clauses)
        K.cancel_until(self.st, 0)
        # drop duplicate literals and tautologies before handing over
        cleaned = []
        for c in clauses:
            s = set(c)
            if any(-x in s for x in s):
                continue
            cleaned.append(sorted(s, key=abs))
        offsets = np.zeros(len(cleaned) + 1, np.int64)
        offsets[1:] = np.cumsum([len(c) for c in cleaned])
        flat = np.fromiter((_to_internal(x) for c in cleaned for x in c), np.int32, count=int(offsets[-1]))
        self._grow(extra_lits=int(offsets[-1]), extra_clauses=len(cleaned))
        K.load_clauses(self.st, flat, offsets)

    @property
    def ok(self) -> bool:
        return bool(self.st.S[K.OK])

    # -- low-level hooks (used by tests and tools) --------------------------------

    def value(self, lit: int) -> bool | None:
        v = self.st.val[_to_internal(lit)]
        return None if v == 0 else bool(v > 0)

    def level_of(self, var: int) -> int:
        return int(self.st.level[var - 1])

    @property
    def decision_level(self) -> int:
        return int(self.st.S[K.DLEVEL])

    @property
    def trail(self) -> list[int]:
        return [_to_dimacs(int(x)) for x in self.st.trail[:self.st.S[K.TRAIL_SIZE]]]

    def decide(self, lit: int) -> None:
        """Open a new decision level and assign ``lit`` (no propagation)."""
        if self.value(lit) is not None:
            raise ValueError(f"literal {lit} already assigned")
        K.new_level(self.st)
        K.enqueue(self.st, _to_internal(lit), -1)

    def propagate(self) -> list[int] | None:
        """Unit-propagate to fixpoint; return the conflicting clause, if any."""
        self._grow()
        c = self._last_conflict = int(K.propagate(self.st))
        if c < 0:
            return None
        return self._clause_lits(c)

    def _clause_lits(self, c: int) -> list[int]:
        s = int(self.st.cl_start[c])
        return [_to_dimacs(int(x)) for x in self.st.cl_lits[s:s + self.st.cl_size[c]]]

    def conflict_index(self) -> int:
        """Slot of the clause returned by the last ``propagate`` (-1 if none)."""
        return self._last_conflict

    def analyze(self, conflict: int) -> tuple[list[int], int, int]:
        """First-UIP analysis of clause slot ``conflict`` -> (learnt, backjump level, lbd)."""
        if self.decision_level == 0:
            raise ValueError("conflict at level 0: the formula is unsatisfiable")
        n, bt, lbd = K.analyze(self.st, conflict)
        return [_to_dimacs(int(x)) for x in self.st.buf[:n]], int(bt), int(lbd)

    def backtrack(self, level: int) -> None:
        K.cancel_until(self.st, level)

    def learnt_clauses(self) -> list[tuple[list[int], int]]:
        st = self.st
        out = []
        for c in range(int(st.S[K.NSLOTS])):
            if st.cl_flags[c] == K.LEARNT:
                out.append((self._clause_lits(c), int(st.cl_lbd[c])))
        return out

    def add_learnt(self, lits: Sequence[int], lbd: int) -> int:
        """Insert a clause flagged as learnt (must be implied by the formula); returns its slot."""
        if len({abs(x) for x in lits}) != len(lits) or len(lits) < 2:
            raise ValueError("a learnt clause needs at least two distinct variables")
        self._grow(extra_lits=len(lits), extra_clauses=1)
        arr = np.array([_to_internal(x) for x in lits], np.int32)
        return int(K.alloc_clause(self.st, arr, len(arr), K.LEARNT, lbd))

    def reduce_db(self) -> int:
        return int(K.reduce_db(self.st))

    def cancel(self) -> None:
        """Ask a running ``solve`` (possibly in another thread) to stop."""
        self.cancel_flag[0] = 1

    # -- solving -----------------------------------------------------------------

    def _sync_stats(self) -> None:
        S = self.st.S
        self.stats.conflicts = int(S[K.CONFLICTS])
        self.stats.decisions = int(S[K.DECISIONS])
        self.stats.propagations = int(S[K.PROPAGATIONS])
        self.stats.learnt = int(S[K.TOTAL_LEARNT])
        self.stats.reductions = int(S[K.NREDUCE])

    def _run(self, limit: int, restart: bool, assumptions: np.ndarray) -> int:
        while True:
            status = K.search(self.st, limit, restart, assumptions, self.cancel_flag)
            if status != K.NEED_GROW:
                return status
            self._grow(extra_lits=self.num_vars, extra_clauses=1)

    def solve(self, assumptions: Sequence[int] = (), *, conflict_budget: int | None = None,
              time_budget: float | None = None) -> SolveResult:
        """Run CDCL search.

        Budget exhaustion or cancellation yields status ``UNKNOWN``, never UNSAT.
        """
        with self._lock:
            return self._solve(assumptions, conflict_budget, time_budget)

    def _solve(self, assumptions, conflict_budget, time_budget) -> SolveResult:
        t0 = time.perf_counter()
        self.cancel_flag[0] = 0
        st = self.st
        K.cancel_until(st, 0)
        assume = np.array([_to_internal(x) for x in assumptions], np.int32)
        for lit in assumptions:
            if lit == 0 or abs(lit) > self.num_vars:
                raise ValueError(f"assumption {lit} outside 1..{self.num_vars}")
        start_conflicts = int(st.S[K.CONFLICTS])
        cfg = self.config
        status = K.UNSAT if not self.ok else None
        while status is None:
            if cfg.restart == "mab":
                arm = self.mab.select()
            else:
                arm = POLICY_KINDS.index(cfg.restart)
            window = self.policies[arm].next_limit()
            self.st.S[K.WIN_CONFLICTS] = 0
            self.st.S[K.WIN_LBD_SUM] = 0
            done = 0
            while done < window:
                step = min(window - done, cfg.chunk)
                if conflict_budget is not None:
                    remaining = conflict_budget - (int(self.st.S[K.CONFLICTS]) - start_conflicts)
                    if remaining <= 0:
                        status = K.LIMIT
                        break
                    step = min(step, remaining)
                before = int(self.st.S[K.CONFLICTS])
                res = self._run(step, done + step >= window, assume)
                done += int(self.st.S[K.CONFLICTS]) - before
                if res != K.LIMIT:
                    status = res
                    break
                if time_budget is not None and time.perf_counter() - t0 > time_budget:
                    status = K.LIMIT
                    break
                if self.cancel_flag[0]:
                    status = K.CANCELLED
                    break
            win_c = int(self.st.S[K.WIN_CONFLICTS])
            win_l = int(self.st.S[K.WIN_LBD_SUM])
            kind = POLICY_KINDS[arm]
            if status is None:
                self.stats.restarts += 1
                self.stats.restarts_per_arm[kind] += 1
            if cfg.restart == "mab" and (status is None or win_c > 0):
                r = self.mab.update(win_c, win_l, arm)
                self.stats.reward_per_arm[kind] += r
            elif win_c > 0:
                self.stats.reward_per_arm[kind] += DiscountedUCB.reward(win_c, win_l)
        self._sync_stats()
        self.stats.wall += time.perf_counter() - t0
        return self._finish(status)

    def _finish(self, status: int) -> SolveResult:
        st = self.st
        if status == K.SAT:
            vals = st.val[0::2]
            model = {v + 1: bool(vals[v] > 0) for v in range(self.num_vars)}
            K.cancel_until(st, 0)
            self._verify(model)
            return SolveResult("SAT", model=model, stats=self.stats)
        if status == K.UNSAT:
            return SolveResult("UNSAT", stats=self.stats)
        if status == K.UNSAT_ASSUMPTIONS:
            n = int(st.S[K.BUF_LEN])
            failed = sorted({-_to_dimacs(int(x)) for x in st.buf[:n]}, key=abs)
            K.cancel_until(st, 0)
            return SolveResult("UNSAT", failed_assumptions=failed, stats=self.stats)
        K.cancel_until(st, 0)
        return SolveResult("UNKNOWN", stats=self.stats)

    def _verify(self, model: dict[int, bool]) -> None:
        if not self.original:
            return
        lens = np.fromiter((len(c) for c in self.original), np.int64, count=len(self.original))
        if (lens == 0).any():
            raise AssertionError("SAT claimed for a formula containing the empty clause")
        flat = np.fromiter((x for c in self.original for x in c), np.int64, count=int(lens.sum()))
        vals = np.zeros(self.num_vars + 1, bool)
        vals[1:] = [model[v] for v in range(1, self.num_vars + 1)]
        truth = vals[np.abs(flat)] ^ (flat < 0)
        starts = np.concatenate(([0], np.cumsum(lens)[:-1]))
        sat = np.logical_or.reduceat(truth, starts)
        if not sat.all():
            bad = int(np.flatnonzero(~sat)[0])
            raise AssertionError(f"model falsifies clause {self.original[bad]}")


def solve(formula: Formula, assumptions: Sequence[int] = (), config: SolverConfig | None = None,
          **budgets) -> SolveResult:
    return Solver(formula, config=config).solve(assumptions, **budgets)
