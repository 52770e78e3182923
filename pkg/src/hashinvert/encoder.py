"""Compile step-reduced SHA-1 inversion problems to CNF.

An :class:`Instance` is rebuilt from scratch whenever its abstraction changes,
so blocking clauses are stored by meaning (step index and recorded word) and
turned into literals against the current variable map.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from . import sha1
from .cnf import BitVec32, Formula, encode_multiop_add, encode_rotl, eval_under

ABSTRACTION_MODES = ("identity", "free")
WORD_NAMES = "abcde"
BLOCK_WINDOW = 8


def encode_ft(f: Formula, t: int, b: BitVec32, c: BitVec32, d: BitVec32) -> BitVec32:
    """Round function per bit, with XORs of disjoint terms written as ORs.

    Ch and Maj use their OR forms, (b&c)|(~b&d) and (b&c)|(b&d)|(c&d), each a
    single gadget; Parity is two chained two-input XORs.
    """
    if not 0 <= t < sha1.MAX_STEPS:
        raise ValueError(f"step index {t} out of range 0..79")
    if t < 20:
        return tuple(f.ite(b[i], c[i], d[i]) for i in range(32))
    if 40 <= t < 60:
        return tuple(f.maj3(b[i], c[i], d[i]) for i in range(32))
    return tuple(f.xor2(f.xor2(b[i], c[i]), d[i]) for i in range(32))


def encode_step(f: Formula, t: int, state: Sequence[BitVec32], w: BitVec32) -> tuple[BitVec32, ...]:
    a, b, c, d, e = state
    fv = encode_ft(f, t, b, c, d)
    new_a = encode_multiop_add(f, [fv, e, encode_rotl(a, 5), w, f.const_word(sha1.round_constant(t))])
    return (new_a, a, encode_rotl(b, 30), c, d)


def encode_expansion(f: Formula, words: list[BitVec32], count: int) -> None:
    for i in range(len(words), count):
        mixed = tuple(f.xor([words[i - 3][k], words[i - 8][k], words[i - 14][k], words[i - 16][k]])
                      for k in range(32))
        words.append(encode_rotl(mixed, 1))


def bit_position(pos: int) -> tuple[int, int]:
    """Message bit ``pos`` (0 = first bit) -> (word index, bit index from LSB)."""
    if not 0 <= pos < 512:
        raise ValueError(f"message bit position {pos} outside 0..511")
    return pos // 32, 31 - pos % 32


@dataclass
class Instance:
    target: tuple[int, ...]
    nsteps: int
    abstracted: frozenset[int] = frozenset()
    mask: dict[int, bool] = field(default_factory=dict)
    padding: int | None = None
    mode: str = "identity"
    fold: bool = True
    formula: Formula = field(default_factory=Formula, repr=False)
    varmap: dict[str, tuple[int, ...]] = field(default_factory=dict, repr=False)

    def word_lits(self, name: str) -> tuple[int, ...]:
        return self.varmap[name]

    def decode_word(self, model: Mapping[int, bool], name: str) -> int:
        return sum(1 << i for i, lit in enumerate(self.varmap[name]) if model[abs(lit)] == (lit > 0))

    def decode_block(self, model: Mapping[int, bool]) -> tuple[int, ...]:
        return tuple(self.decode_word(model, f"W[{i}]") for i in range(16))

    def decode_state(self, model: Mapping[int, bool], t: int) -> sha1.StepState:
        return sha1.StepState(*(self.decode_word(model, f"state[{t}].{x}") for x in WORD_NAMES), t=t)

    def decode_digest(self, model: Mapping[int, bool]) -> tuple[int, ...]:
        return tuple(self.decode_word(model, f"digest[{j}]") for j in range(5))

    def header(self) -> list[str]:
        lines = [
            "hashinvert sha1-preimage",
            f"nsteps {self.nsteps}",
            f"target {sha1.digest_to_hex(self.target)}",
            "abstracted " + " ".join(map(str, sorted(self.abstracted))),
            f"abstraction {self.mode}",
        ]
        if self.padding is not None:
            lines.append(f"padding {self.padding}")
        if self.mask:
            lines.append(f"mask {len(self.mask)} bits")
        return lines


def encode_instance(target: Sequence[int], nsteps: int, *, abstract_k: int = 0,
                    abstracted: Iterable[int] | None = None, mask: Mapping[int, bool] | None = None,
                    padding: int | None = None, mode: str = "identity", fold: bool = True,
                    allow_deep_abstraction: bool = False) -> Instance:
    """Encode "find W with compress(IV, W, nsteps) == target".

    The first ``abstract_k`` steps (or exactly the steps in ``abstracted``)
    are replaced: in ``identity`` mode by state[t+1] == state[t] equality
    clauses, in ``free`` mode by an unconstrained new word. Message expansion
    is always encoded in full.
    """
    if not 1 <= nsteps <= sha1.MAX_STEPS:
        raise ValueError(f"nsteps must be in 1..80, got {nsteps}")
    if len(target) != 5:
        raise ValueError("target digest has five words")
    if mode not in ABSTRACTION_MODES:
        raise ValueError(f"abstraction mode must be one of {ABSTRACTION_MODES}")
    if abstracted is None:
        if abstract_k < 0:
            raise ValueError("abstract_k must be >= 0")
        if abstract_k > max(0, nsteps - 20) and not allow_deep_abstraction:
            raise ValueError(f"abstract_k={abstract_k} would leave fewer than 20 intact steps "
                             f"(max {max(0, nsteps - 20)} for nsteps={nsteps})")
        abstracted = range(abstract_k)
    abstracted = frozenset(abstracted)
    if any(not 0 <= t < nsteps for t in abstracted):
        raise ValueError("abstracted steps must lie in 0..nsteps-1")
    pinned = dict(mask or {})
    for pos in pinned:
        bit_position(pos)
    if padding is not None:
        for pos, value in sha1.padding_mask(padding).items():
            if pos in pinned and pinned[pos] != value:
                raise ValueError(f"mask bit {pos}={int(pinned[pos])} contradicts padding for a {padding}-bit message")
            pinned[pos] = value

    inst = Instance(target=tuple(x & sha1.MASK32 for x in target), nsteps=nsteps, abstracted=abstracted,
                    mask=dict(mask or {}), padding=padding, mode=mode, fold=fold)
    f = Formula(fold=fold)
    vm: dict[str, tuple[int, ...]] = {}
    words = [f.fresh_word() for _ in range(16)]
    with f.owner("expansion"):
        encode_expansion(f, words, nsteps)
    for i, w in enumerate(words):
        vm[f"W[{i}]"] = w

    state = tuple(f.const_word(h) for h in sha1.IV)
    for x, lits in zip(WORD_NAMES, state):
        vm[f"state[0].{x}"] = lits
    for t in range(nsteps):
        if t in abstracted:
            if mode == "identity":
                named = tuple(f.fresh_word() for _ in range(5))
                with f.owner(f"identity:{t}"):
                    for old, new in zip(state, named):
                        for p, q in zip(old, new):
                            f.equal(p, q)
                # the equalities pin copies of constant bits; later steps read the constant itself
                nxt = tuple(tuple(p if f.is_const(p) else q for p, q in zip(old, new))
                            for old, new in zip(state, named))
            else:
                a, b, c, d, _ = state
                named = nxt = (f.fresh_word(), a, encode_rotl(b, 30), c, d)
        else:
            with f.owner(f"step:{t}"):
                named = nxt = encode_step(f, t, state, words[t])
        state = nxt
        for x, lits in zip(WORD_NAMES, named):
            vm[f"state[{t + 1}].{x}"] = lits

    with f.owner("digest"):
        digest = [encode_multiop_add(f, [state[j], f.const_word(sha1.IV[j])]) for j in range(5)]
    for j, lits in enumerate(digest):
        vm[f"digest[{j}]"] = lits
    with f.owner("target"):
        for j, lits in enumerate(digest):
            for i, lit in enumerate(lits):
                f.add_clause([lit if (inst.target[j] >> i) & 1 else -lit])
    with f.owner("mask"):
        for pos, value in sorted(pinned.items()):
            wi, bi = bit_position(pos)
            lit = words[wi][bi]
            f.add_clause([lit if value else -lit])
    f.comments = inst.header()
    inst.formula = f
    inst.varmap = vm
    return inst


def reencode(inst: Instance, **changes) -> Instance:
    args = dict(target=inst.target, nsteps=inst.nsteps, abstracted=inst.abstracted, mask=inst.mask,
                padding=inst.padding, mode=inst.mode, fold=inst.fold)
    args.update(changes)
    return encode_instance(args.pop("target"), args.pop("nsteps"), **args)


def fix_message_bits(inst: Instance, mask: Mapping[int, bool]) -> Instance:
    """Pin message bits (position -> value), e.g. for partial-preimage runs."""
    if not mask:
        return inst
    for pos in mask:
        bit_position(pos)
    merged = dict(inst.mask)
    for pos, value in mask.items():
        if pos in merged and merged[pos] != value:
            raise ValueError(f"bit {pos} already pinned to {int(merged[pos])}")
        merged[pos] = bool(value)
    return reencode(inst, mask=merged)


def parse_mask(text: str) -> dict[int, bool]:
    """Parse ``pos:val,pos:val`` pairs or a 128-character hex template.

    In the template, hex digits pin their four bits and ``?``/``x``/``*``
    leave them free.
    """
    text = text.strip()
    if not text:
        return {}
    if ":" in text:
        out = {}
        for item in text.replace(" ", "").split(","):
            if not item:
                continue
            pos_s, _, val_s = item.partition(":")
            pos = int(pos_s)
            bit_position(pos)
            if val_s not in ("0", "1"):
                raise ValueError(f"mask value must be 0 or 1 in {item!r}")
            out[pos] = val_s == "1"
        return out
    if len(text) != 128:
        raise ValueError(f"mask template must have 128 characters, got {len(text)}")
    out = {}
    for k, ch in enumerate(text.lower()):
        if ch in "?x*":
            continue
        nib = int(ch, 16)
        for j in range(4):
            out[4 * k + j] = bool((nib >> (3 - j)) & 1)
    return out


def block_mask(block: Sequence[int], positions: Iterable[int] | None = None) -> dict[int, bool]:
    """Mask pinning ``positions`` (default: all 512) to the bits of ``block``."""
    positions = range(512) if positions is None else positions
    return {p: sha1.message_bit(block, p) for p in positions}


# -- CEGAR support --------------------------------------------------------------

@dataclass(frozen=True)
class Blocker:
    """Negation of recorded new-word values ``a_t``: at least one must differ."""

    words: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return 32 * len(self.words)

    def materialize(self, inst: Instance) -> tuple[int, ...]:
        lits = []
        for t, value in self.words:
            for i, lit in enumerate(inst.varmap[f"state[{t}].a"]):
                lits.append(-lit if (value >> i) & 1 else lit)
        return tuple(lits)

    def falsified_by(self, trace: sha1.StepTrace) -> bool:
        return all(trace.states[t].a == value for t, value in self.words)


def blocking_clause(trace: sha1.StepTrace, nsteps: int) -> Blocker | None:
    """Block the new words of steps 1..nsteps-8 recorded in ``trace``."""
    last = nsteps - BLOCK_WINDOW
    if last < 1:
        return None
    return Blocker(tuple((t, trace.states[t].a) for t in range(1, last + 1)))


@dataclass
class CCDB:
    blockers: list[Blocker] = field(default_factory=list)

    def add(self, blocker: Blocker | None) -> None:
        if blocker is not None:
            self.blockers.append(blocker)

    def clear(self) -> None:
        self.blockers.clear()

    def __len__(self) -> int:
        return len(self.blockers)

    def clauses(self, inst: Instance) -> list[tuple[int, ...]]:
        return [b.materialize(inst) for b in self.blockers]


def step_group(t: int, fold: bool = True) -> tuple[Formula, list[BitVec32], BitVec32, list[BitVec32]]:
    """Clauses of one real step over free input/output words.

    Returns (formula, input state words, message word, output state words);
    output words are tied to the step result by equality clauses so the whole
    step (new word plus the shifted words) can be checked.
    """
    f = Formula(fold=fold)
    ins = [f.fresh_word() for _ in range(5)]
    w = f.fresh_word()
    outs = [f.fresh_word() for _ in range(5)]
    with f.owner(f"step:{t}"):
        result = encode_step(f, t, ins, w)
        for r, o in zip(result, outs):
            for p, q in zip(r, o):
                f.equal(p, q)
    return f, ins, w, outs


def _assign_word(assign: dict[int, bool], lits: BitVec32, value: int) -> None:
    for i, lit in enumerate(lits):
        assign[abs(lit)] = bool((value >> i) & 1) == (lit > 0)


def violated_steps(inst: Instance, states: Sequence[sha1.StepState], block: Sequence[int]) -> set[int]:
    """Abstracted steps whose real clauses are falsified by the candidate states."""
    w = sha1.expand_message(block, inst.nsteps)
    out = set()
    for t in sorted(inst.abstracted):
        f, ins, wv, outs = step_group(t, inst.fold)
        assign: dict[int, bool] = {}
        for lits, value in zip(ins, states[t].words):
            _assign_word(assign, lits, value)
        _assign_word(assign, wv, w[t])
        for lits, value in zip(outs, states[t + 1].words):
            _assign_word(assign, lits, value)
        full = f.simulate(assign)
        ok, falsified = eval_under(f, full)
        if not ok:
            out.add(t)
    return out


def refine(inst: Instance, block: Sequence[int], model: Mapping[int, bool] | None = None) -> Instance:
    """Restore every abstracted step whose real clauses the candidate violates.

    Candidate states come from ``model`` when given, otherwise from the
    abstracted forward run of ``block`` (identity mode only).
    """
    if not inst.abstracted:
        raise RuntimeError("refine called on an instance without abstraction")
    if model is not None:
        states = [inst.decode_state(model, t) for t in range(inst.nsteps + 1)]
    elif inst.mode == "identity":
        states = list(sha1.abstract_trace(block, inst.nsteps, inst.abstracted).states)
    else:
        raise ValueError("free-boundary refinement needs the solver model")
    restore = violated_steps(inst, states, block)
    if not restore:
        raise RuntimeError("spurious candidate violates no abstracted step; abstraction invariant broken")
    return reencode(inst, abstracted=inst.abstracted - restore)


# -- variable map sidecar -------------------------------------------------------

def emit_varmap(inst: Instance, sink: IO[str]) -> None:
    doc = {
        "nsteps": inst.nsteps,
        "target": sha1.digest_to_hex(inst.target),
        "abstracted": sorted(inst.abstracted),
        "num_vars": inst.formula.num_vars,
        "vars": {name: list(lits) for name, lits in inst.varmap.items()},
    }
    json.dump(doc, sink, indent=1)
    sink.write("\n")


def parse_varmap(source: IO[str] | str) -> dict[str, tuple[int, ...]]:
    doc = json.loads(source) if isinstance(source, str) else json.load(source)
    return {name: tuple(lits) for name, lits in doc["vars"].items()}
