"""CNF formulas, Tseitin gadgets and DIMACS I/O.

Literals are DIMACS-style nonzero ints. Words are tuples of 32 literals with
bit 0 the least significant. Gadgets fold constant inputs when the formula was
built with ``fold=True``; constants are literals of one dedicated variable that
is pinned true by a unit clause and allocated on first use.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

Lit = int
Clause = tuple[int, ...]
BitVec32 = tuple[int, ...]

WIDTH = 32


class DimacsError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Gate:
    kind: str
    out: int
    inputs: tuple[int, ...]


def normalize_clause(lits: Iterable[int]) -> Clause | None:
    """Sort by variable, drop duplicates; ``None`` for a tautology."""
    s = set()
    for lit in lits:
        if lit == 0:
            raise ValueError("0 is not a literal")
        if -lit in s:
            return None
        s.add(lit)
    return tuple(sorted(s, key=lambda x: (abs(x), x)))


@dataclass
class Formula:
    num_vars: int = 0
    clauses: list[Clause] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)
    owners: list[str] = field(default_factory=list)
    gates: list[Gate] = field(default_factory=list)
    fold: bool = True
    const_var: int | None = None
    _owner: str = field(default="", repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Formula):
            return NotImplemented
        return self.num_vars == other.num_vars and self.clauses == other.clauses

    # -- construction ------------------------------------------------------

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def fresh_word(self) -> BitVec32:
        start = self.num_vars + 1
        self.num_vars += WIDTH
        return tuple(range(start, start + WIDTH))

    def add_clause(self, lits: Iterable[int]) -> bool:
        """Add a normalized clause; returns False if it was a dropped tautology."""
        lits = list(lits)
        for lit in lits:
            if abs(lit) > self.num_vars:
                raise ValueError(f"literal {lit} exceeds num_vars={self.num_vars}")
        clause = normalize_clause(lits)
        if clause is None:
            return False
        self.clauses.append(clause)
        self.owners.append(self._owner)
        return True

    @contextmanager
    def owner(self, tag: str) -> Iterator[None]:
        """Tag every clause added inside the block with ``tag``."""
        prev, self._owner = self._owner, tag
        try:
            yield
        finally:
            self._owner = prev

    def clauses_owned_by(self, tag: str) -> list[int]:
        return [i for i, o in enumerate(self.owners) if o == tag]

    # -- constants ---------------------------------------------------------

    @property
    def true(self) -> int:
        if self.const_var is None:
            self.const_var = self.new_var()
            self.gates.append(Gate("const", self.const_var, ()))
            with self.owner("const"):
                self.add_clause([self.const_var])
        return self.const_var

    @property
    def false(self) -> int:
        return -self.true

    def const(self, value: bool) -> int:
        return self.true if value else self.false

    def const_word(self, value: int) -> BitVec32:
        return tuple(self.const(bool((value >> i) & 1)) for i in range(WIDTH))

    def is_const(self, lit: int) -> bool:
        return self.const_var is not None and abs(lit) == self.const_var

    def const_value(self, lit: int) -> bool:
        return lit > 0

    def _foldable(self, lit: int) -> bool:
        return self.fold and self.is_const(lit)

    def _gate_out(self, kind: str, inputs: Sequence[int]) -> int:
        y = self.new_var()
        self.gates.append(Gate(kind, y, tuple(inputs)))
        return y

    # -- gadgets -----------------------------------------------------------

    def and2(self, a: int, b: int) -> int:
        if self.fold:
            for x, other in ((a, b), (b, a)):
                if self.is_const(x):
                    return other if x > 0 else x
            if a == b:
                return a
            if a == -b:
                return self.false
        y = self._gate_out("and", (a, b))
        self.add_clause([-y, a])
        self.add_clause([-y, b])
        self.add_clause([y, -a, -b])
        return y

    def or2(self, a: int, b: int) -> int:
        return -self.and2(-a, -b)

    def xor2(self, a: int, b: int) -> int:
        return self.xor([a, b])

    def ite(self, s: int, a: int, b: int) -> int:
        """``a`` if ``s`` else ``b``."""
        if self.fold:
            if self.is_const(s):
                return a if s > 0 else b
            if a == b:
                return a
            if a == -b:
                return self.xor([s, b])
        y = self._gate_out("ite", (s, a, b))
        self.add_clause([-s, -a, y])
        self.add_clause([-s, a, -y])
        self.add_clause([s, -b, y])
        self.add_clause([s, b, -y])
        self.add_clause([-a, -b, y])
        self.add_clause([a, b, -y])
        return y

    def maj3(self, a: int, b: int, c: int) -> int:
        if self.fold:
            lits = [a, b, c]
            for i, x in enumerate(lits):
                if self.is_const(x):
                    p, q = (lits[j] for j in range(3) if j != i)
                    return self.or2(p, q) if x > 0 else self.and2(p, q)
            if a == b or a == c:
                return a
            if b == c:
                return b
            if a == -b:
                return c
            if a == -c:
                return b
            if b == -c:
                return a
        y = self._gate_out("maj", (a, b, c))
        for p, q in ((a, b), (a, c), (b, c)):
            self.add_clause([-p, -q, y])
            self.add_clause([p, q, -y])
        return y

    def xor(self, lits: Sequence[int]) -> int:
        """Parity of ``lits``; direct encoding up to 4 inputs, chained beyond."""
        lits = list(lits)
        if self.fold:
            negate = False
            by_var: dict[int, int] = {}
            for x in lits:
                if self.is_const(x):
                    negate ^= x > 0
                    continue
                v = abs(x)
                if v in by_var:
                    # x ^ x = 0 and x ^ -x = 1
                    negate ^= by_var.pop(v) != x
                else:
                    by_var[v] = x
            lits = list(by_var.values())
            if not lits:
                return self.const(negate)
            if len(lits) == 1:
                return -lits[0] if negate else lits[0]
            if negate:
                lits[0] = -lits[0]
        if not lits:
            return self.false
        if len(lits) == 1:
            return lits[0]
        while len(lits) > 4:
            lits = [self.xor(lits[:4])] + lits[4:]
        y = self._gate_out("xor", lits)
        allv = lits + [y]
        for signs in itertools.product((False, True), repeat=len(allv)):
            if sum(signs) % 2 == 1:
                # exclude the odd-parity assignment given by signs
                self.add_clause([-x if s else x for x, s in zip(allv, signs)])
        return y

    def equal(self, a: int, b: int) -> None:
        """Constrain ``a == b`` with two binary clauses (never folded)."""
        self.add_clause([-a, b])
        self.add_clause([a, -b])

    # -- simulation --------------------------------------------------------

    def simulate(self, inputs: Mapping[int, bool]) -> dict[int, bool]:
        """Evaluate all gate outputs from values of the non-gate variables."""
        val = dict(inputs)

        def lv(lit: int) -> bool:
            return val[abs(lit)] ^ (lit < 0)

        for g in self.gates:
            x = [lv(i) for i in g.inputs]
            if g.kind == "const":
                val[g.out] = True
            elif g.kind == "and":
                val[g.out] = all(x)
            elif g.kind == "xor":
                val[g.out] = sum(x) % 2 == 1
            elif g.kind == "maj":
                val[g.out] = sum(x) >= 2
            elif g.kind == "ite":
                val[g.out] = x[1] if x[0] else x[2]
            else:
                raise ValueError(f"unknown gate kind {g.kind}")
        return val


def encode_rotl(w: BitVec32, r: int) -> BitVec32:
    """Left rotation by ``r``; pure rewiring."""
    r %= WIDTH
    return tuple(w[(i - r) % WIDTH] for i in range(WIDTH))


def word_value(f: Formula, w: BitVec32) -> int | None:
    """Integer value of an all-constant word, else ``None``."""
    if not all(f.is_const(x) for x in w):
        return None
    return sum(1 << i for i, x in enumerate(w) if x > 0)


def encode_multiop_add(f: Formula, operands: Sequence[BitVec32]) -> BitVec32:
    """Sum of 2..5 words mod 2**32 by column-wise carry-save reduction.

    Each column is reduced with full adders (three bits to sum + carry) and
    a final half adder; carries feed the next column, carries out of bit 31
    are dropped. Constant bits are folded into a single constant operand.
    """
    if not 2 <= len(operands) <= 5:
        raise ValueError(f"multi-operand adder takes 2..5 words, got {len(operands)}")
    cols: list[list[int]] = [[] for _ in range(WIDTH)]
    const_sum = 0
    for op in operands:
        if len(op) != WIDTH:
            raise ValueError("operands must be 32-bit words")
        for i, x in enumerate(op):
            if f.fold and f.is_const(x):
                if x > 0:
                    const_sum += 1 << i
            else:
                cols[i].append(x)
    const_sum &= (1 << WIDTH) - 1
    for i in range(WIDTH):
        if (const_sum >> i) & 1:
            cols[i].append(f.true)
    out = []
    for i in range(WIDTH):
        col = cols[i]
        while len(col) > 1:
            if len(col) >= 3:
                a, b, c = col[0], col[1], col[2]
                del col[:3]
                col.append(f.xor([a, b, c]))
                if i + 1 < WIDTH:
                    cols[i + 1].append(f.maj3(a, b, c))
            else:
                a, b = col
                del col[:2]
                col.append(f.xor([a, b]))
                if i + 1 < WIDTH:
                    cols[i + 1].append(f.and2(a, b))
        out.append(col[0] if col else f.false)
    return tuple(out)


def eval_under(formula: Formula, assignment: Mapping[int, bool] | Sequence[bool]) -> tuple[bool, set[int]]:
    """Evaluate every clause under a total assignment.

    ``assignment`` is a mapping var -> bool or a sequence indexed by var
    (index 0 ignored). Returns (satisfied, indices of falsified clauses).
    """
    if isinstance(assignment, Mapping):
        missing = [v for v in range(1, formula.num_vars + 1) if v not in assignment]
        if missing:
            raise ValueError(f"assignment is partial: {len(missing)} variables unassigned (first {missing[0]})")
        get = assignment.__getitem__
    else:
        if len(assignment) < formula.num_vars + 1:
            raise ValueError("assignment is partial: sequence shorter than num_vars + 1")
        get = assignment.__getitem__
    falsified = set()
    for idx, clause in enumerate(formula.clauses):
        if not any(get(abs(lit)) == (lit > 0) for lit in clause):
            falsified.add(idx)
    return not falsified, falsified


# -- DIMACS -------------------------------------------------------------------

def write_dimacs(formula: Formula, sink: IO[str]) -> None:
    for line in formula.comments:
        sink.write(f"c {line}\n" if line else "c\n")
    sink.write(f"p cnf {formula.num_vars} {len(formula.clauses)}\n")
    for clause in formula.clauses:
        sink.write(" ".join(map(str, clause)))
        sink.write(" 0\n" if clause else "0\n")


def dimacs_string(formula: Formula) -> str:
    import io

    buf = io.StringIO()
    write_dimacs(formula, buf)
    return buf.getvalue()


def parse_dimacs(source: IO[str] | str) -> Formula:
    """Parse DIMACS CNF text (a string or a text stream)."""
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = source
    comments: list[str] = []
    header: tuple[int, int] | None = None
    raw: list[list[int]] = []
    cur: list[int] = []
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("c"):
            comments.append(line[2:] if line.startswith("c ") else line[1:])
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                nv, nc = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if nv < 0 or nc < 0:
                raise DimacsError("negative counts in header", lineno)
            header = (nv, nc)
            continue
        if line.startswith("%"):
            break
        if header is None:
            raise DimacsError("clause before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"bad token {tok!r}", lineno) from None
            if lit == 0:
                raw.append(cur)
                cur = []
                continue
            if abs(lit) > header[0]:
                raise DimacsError(f"literal {lit} out of range 1..{header[0]}", lineno)
            cur.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if cur:
        raise DimacsError("last clause is not terminated by 0", lineno)
    if len(raw) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(raw)}")
    f = Formula(num_vars=header[0], comments=comments)
    for clause in raw:
        if not clause:
            f.clauses.append(())
            f.owners.append("")
        else:
            f.add_clause(clause)
    return f
