import itertools
import random

import numpy as np
import pytest

from hashinvert.cnf import Formula, parse_dimacs
from hashinvert.solver import Solver, SolverConfig, compute_lbd, solve
from hashinvert.solver.restarts import POLICY_KINDS


def brute_force_sat(num_vars: int, clauses) -> bool:
    """Bit-parallel exhaustive enumeration of all 2**num_vars assignments."""
    low = min(num_vars, 6)
    nwords = 1 << max(0, num_vars - 6)
    lanes = np.arange(1 << low, dtype=np.uint64)
    words = np.arange(nwords, dtype=np.uint64)
    var_bits = []
    for v in range(num_vars):
        if v < low:
            pattern = np.uint64(sum(1 << int(j) for j in lanes if (j >> v) & 1))
            var_bits.append(np.full(nwords, pattern, np.uint64))
        else:
            on = ((words >> np.uint64(v - low)) & np.uint64(1)).astype(bool)
            var_bits.append(np.where(on, ~np.uint64(0), np.uint64(0)).astype(np.uint64))
    full = np.uint64((1 << (1 << low)) - 1) if low < 6 else ~np.uint64(0)
    alive = np.full(nwords, full, np.uint64)
    for clause in clauses:
        acc = np.zeros(nwords, np.uint64)
        for lit in clause:
            x = var_bits[abs(lit) - 1]
            acc |= x if lit > 0 else ~x
        alive &= acc
        if not alive.any():
            return False
    return bool(alive.any())


def random_cnf(rng, nv, nc, k=3):
    return [tuple(rng.choice([-1, 1]) * v for v in rng.sample(range(1, nv + 1), k)) for _ in range(nc)]


def test_brute_force_oracle_sanity():
    assert brute_force_sat(1, [(1,)])
    assert not brute_force_sat(1, [(1,), (-1,)])
    assert brute_force_sat(8, [(1, 2), (-1, 8), (-8,)])
    assert not brute_force_sat(8, [(v,) for v in range(1, 8)] + [(-7, -3)])
    rng = random.Random(0)
    for _ in range(50):
        nv = rng.randint(1, 10)
        cls = random_cnf(rng, nv, rng.randint(1, 30), k=min(3, nv))
        expected = any(all(any((bits[abs(l) - 1] == 1) == (l > 0) for l in c) for c in cls)
                       for bits in itertools.product([0, 1], repeat=nv))
        assert brute_force_sat(nv, cls) == expected


def test_trivial_formulas():
    res = Solver().solve()
    assert res.status == "SAT" and res.model == {}
    assert Solver(num_vars=1, clauses=[(1,), (-1,)]).solve().status == "UNSAT"
    assert Solver(num_vars=2, clauses=[()]).solve().status == "UNSAT"


@pytest.mark.parametrize("restart", ["mab", *POLICY_KINDS])
def test_random_3cnf_matches_enumeration(restart):
    rng = random.Random(["mab", *POLICY_KINDS].index(restart))
    for _ in range(100):
        cls = random_cnf(rng, 20, 85)
        res = Solver(num_vars=20, clauses=cls, config=SolverConfig(restart=restart)).solve()
        assert res.sat == brute_force_sat(20, cls)
        if res.sat:
            assert all(any(res.model[abs(l)] == (l > 0) for l in c) for c in cls)


def pigeonhole(pigeons, holes):
    var = lambda p, h: p * holes + h + 1
    cls = [tuple(var(p, h) for h in range(holes)) for p in range(pigeons)]
    for h in range(holes):
        for p, q in itertools.combinations(range(pigeons), 2):
            cls.append((-var(p, h), -var(q, h)))
    return pigeons * holes, cls


@pytest.mark.parametrize("holes", [2, 3, 4, 5])
def test_pigeonhole_unsat(holes):
    nv, cls = pigeonhole(holes + 1, holes)
    assert Solver(num_vars=nv, clauses=cls).solve().status == "UNSAT"
    nv, cls = pigeonhole(holes, holes)
    assert Solver(num_vars=nv, clauses=cls).solve().sat


def test_level_zero_propagation():
    s = Solver(num_vars=3, clauses=[(1,), (-1, 2)])
    assert s.propagate() is None
    assert s.value(1) is True and s.value(2) is True and s.value(3) is None
    assert s.level_of(1) == 0 and s.level_of(2) == 0
    s = Solver(num_vars=2, clauses=[(1, 2), (1, -2)])
    s.decide(-1)
    conflict = s.propagate()
    assert conflict is not None and set(conflict) in ({1, 2}, {1, -2})
    assert not Solver(num_vars=1, clauses=[(1,), (-1,)]).ok


def naive_propagate(clauses, assign):
    assign = dict(assign)
    while True:
        changed = False
        for c in clauses:
            if any(assign.get(abs(l)) == (l > 0) for l in c):
                continue
            free = [l for l in c if abs(l) not in assign]
            if not free:
                return assign, True
            if len(free) == 1:
                assign[abs(free[0])] = free[0] > 0
                changed = True
        if not changed:
            return assign, False


def test_propagate_matches_naive_scan():
    rng = random.Random(1)
    for _ in range(300):
        nv = rng.randint(3, 25)
        cls = random_cnf(rng, nv, rng.randint(1, 4 * nv), k=rng.randint(2, 3))
        s = Solver(num_vars=nv, clauses=cls)
        if not s.ok:
            continue
        assert s.propagate() is None
        while True:
            before = {abs(l): l > 0 for l in s.trail}
            free = [v for v in range(1, nv + 1) if v not in before]
            if not free:
                break
            lit = rng.choice(free) * rng.choice([-1, 1])
            s.decide(lit)
            conflict = s.propagate()
            expected, naive_conflict = naive_propagate(cls, {**before, abs(lit): lit > 0})
            assert (conflict is not None) == naive_conflict
            if conflict is not None:
                assert all(s.value(l) is False for l in conflict)
                break
            assert {abs(l): l > 0 for l in s.trail} == expected


def implied(nv, cls, clause):
    return not brute_force_sat(nv, list(cls) + [(-l,) for l in clause])


def test_analyze_produces_asserting_implied_clauses():
    rng = random.Random(2)
    checked = 0
    for _ in range(400):
        nv = 12
        cls = random_cnf(rng, nv, 50)
        s = Solver(num_vars=nv, clauses=cls)
        if not s.ok or s.propagate() is not None:
            continue
        while True:
            free = [v for v in range(1, nv + 1) if s.value(v) is None]
            if not free:
                break
            s.decide(rng.choice(free) * rng.choice([-1, 1]))
            if s.propagate() is None:
                continue
            conflict = s.conflict_index()
            assert conflict >= 0
            level = s.decision_level
            learnt, bt, lbd = s.analyze(conflict)
            levels = [s.level_of(abs(l)) for l in learnt]
            assert all(s.value(l) is False for l in learnt)
            assert levels.count(level) == 1
            others = [lv for lv in levels if lv != level]
            assert bt == (max(others) if others else 0)
            assert lbd == compute_lbd(levels)
            assert implied(nv, cls, learnt)
            checked += 1
            break
    assert checked > 100


def test_unit_learnt_clause_backjumps_to_zero():
    # deciding x1 forces both x2 and -x2; the learnt clause is (-x1)
    s = Solver(num_vars=3, clauses=[(-1, 2), (-1, -2, 3), (-1, -2, -3)])
    s.decide(1)
    assert s.propagate() is not None
    learnt, bt, lbd = s.analyze(s.conflict_index())
    assert learnt == [-1] and bt == 0 and lbd == 1


def test_learnt_clauses_after_search_are_implied():
    rng = random.Random(3)
    seen = 0
    for _ in range(40):
        cls = random_cnf(rng, 16, 70)
        s = Solver(num_vars=16, clauses=cls, config=SolverConfig(restart="luby"))
        s.solve()
        for learnt, lbd in s.learnt_clauses():
            assert 1 <= lbd <= len(learnt)
            assert implied(16, cls, learnt)
            seen += 1
    assert seen > 50


def test_compute_lbd_examples():
    assert compute_lbd([3, 3, 5, 7]) == 3
    assert compute_lbd([4, 4, 4]) == 1
    assert compute_lbd([0]) == 1
    with pytest.raises(ValueError):
        compute_lbd([])


def test_reduce_db_rules():
    rng = random.Random(4)
    s = Solver(num_vars=200)
    for _ in range(300):
        s.add_learnt(rng.sample(range(1, 201), 3), 2)
    assert s.reduce_db() == 0 and len(s.learnt_clauses()) == 300

    s = Solver(num_vars=200)
    for _ in range(1000):
        s.add_learnt([rng.choice([-1, 1]) * v for v in rng.sample(range(1, 201), rng.randint(2, 6))],
                     rng.randint(3, 12))
    s.reduce_db()
    assert len(s.learnt_clauses()) == 500

    s = Solver(num_vars=10)
    s.add_learnt([-1, 2], 9)
    for _ in range(10):
        s.add_learnt(rng.sample(range(3, 11), 3), 3)
    s.decide(1)
    assert s.propagate() is None and s.value(2) is True
    s.reduce_db()
    assert ({-1, 2}, 9) in [(set(c), lbd) for c, lbd in s.learnt_clauses()]


def test_assumptions_and_failed_subset():
    s = Solver(num_vars=3, clauses=[(-1, 2), (-2, 3)])
    assert s.solve([1]).model[3] is True
    res = s.solve([1, -3])
    assert res.status == "UNSAT" and set(res.failed_assumptions) <= {1, -3} and res.failed_assumptions
    assert s.solve().sat
    with pytest.raises(ValueError):
        s.solve([4])


def test_budget_yields_unknown_never_unsat():
    nv, cls = pigeonhole(9, 8)
    s = Solver(num_vars=nv, clauses=cls)
    res = s.solve(conflict_budget=50)
    assert res.status == "UNKNOWN" and res.stats.conflicts <= 50
    assert s.solve(time_budget=0.0).status == "UNKNOWN"
    s.cancel()  # a cancel request before solving is cleared by the next call
    assert s.solve(conflict_budget=10).status == "UNKNOWN"


def test_cancel_from_another_thread():
    import threading

    nv, cls = pigeonhole(11, 10)
    s = Solver(num_vars=nv, clauses=cls)
    timer = threading.Timer(0.5, s.cancel)
    timer.start()
    res = s.solve()
    timer.join()
    assert res.status == "UNKNOWN"


def test_incremental_clauses_and_growth():
    rng = random.Random(5)
    s = Solver(num_vars=60)
    cls = []
    for _ in range(30):
        batch = random_cnf(rng, 60, 10)
        cls += batch
        s.add_clauses(batch)
        res = s.solve()
        if not res.sat:
            break
        assert all(any(res.model[abs(l)] == (l > 0) for l in c) for c in cls)


def test_stats_and_model_lines():
    f = parse_dimacs("p cnf 3 2\n1 2 0\n-1 3 0\n")
    res = solve(f)
    assert res.sat
    lines = res.model_lines()
    assert lines[-1].endswith(" 0") and all(line.startswith("v ") for line in lines)
    lits = [int(x) for line in lines for x in line[2:].split()][:-1]
    assert sorted(abs(x) for x in lits) == [1, 2, 3]
    nv, cls = pigeonhole(7, 6)
    res = Solver(num_vars=nv, clauses=cls).solve()
    st = res.stats
    assert st.conflicts > 0 and st.decisions > 0 and st.propagations > 0
    assert sum(st.restarts_per_arm.values()) == st.restarts
    assert st.wall >= 0


def test_gadget_formula_solving():
    f = Formula()
    a, b = f.new_var(), f.new_var()
    y = f.xor2(a, b)
    f.add_clause([y])
    f.add_clause([a])
    res = solve(f)
    assert res.model[a] and not res.model[b]
