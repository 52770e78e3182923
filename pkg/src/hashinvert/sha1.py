"""Step-reduced, single-block SHA-1 with intermediate-state tracing.

All words are plain Python ints in ``[0, 2**32)``. A message block is a
tuple of sixteen words in big-endian order (word ``i`` holds message bits
``32*i .. 32*i + 31``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

MASK32 = 0xFFFFFFFF

IV: tuple[int, ...] = (0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0)

ROUND_CONSTANTS: tuple[int, ...] = (0x5A827999, 0x6ED9EBA1, 0x8F1BBCDC, 0xCA62C1D6)

MAX_STEPS = 80


def rotl(x: int, r: int) -> int:
    r %= 32
    return ((x << r) | (x >> (32 - r))) & MASK32


def round_constant(t: int) -> int:
    if not 0 <= t < MAX_STEPS:
        raise ValueError(f"step index {t} out of range 0..79")
    return ROUND_CONSTANTS[t // 20]


def ft(t: int, b: int, c: int, d: int) -> int:
    """Round-dependent boolean function: Ch, Parity, Maj, Parity."""
    if not 0 <= t < MAX_STEPS:
        raise ValueError(f"step index {t} out of range 0..79")
    if t < 20:
        return ((b & c) ^ (~b & d)) & MASK32
    if t < 40 or t >= 60:
        return b ^ c ^ d
    return (b & c) ^ (b & d) ^ (c & d)


@dataclass(frozen=True)
class StepState:
    a: int
    b: int
    c: int
    d: int
    e: int
    t: int = 0

    @property
    def words(self) -> tuple[int, int, int, int, int]:
        return (self.a, self.b, self.c, self.d, self.e)

    @classmethod
    def initial(cls, cv: Sequence[int] = IV) -> "StepState":
        return cls(*cv, t=0)


@dataclass(frozen=True)
class StepTrace:
    """States ``t = 0..nsteps`` of one forward run plus the digest."""

    states: tuple[StepState, ...]
    digest: tuple[int, ...]

    @property
    def nsteps(self) -> int:
        return len(self.states) - 1

    def new_words(self) -> list[int]:
        """The freshly computed word ``a_t`` for ``t = 1..nsteps``."""
        return [s.a for s in self.states[1:]]


def expand_message(block: Sequence[int], count: int = MAX_STEPS) -> list[int]:
    """Return ``W_0 .. W_{count-1}``; words past 15 follow the XOR/rotate recurrence."""
    if len(block) != 16:
        raise ValueError("a message block has exactly 16 words")
    w = [x & MASK32 for x in block]
    for i in range(16, count):
        w.append(rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1))
    return w[:max(count, 16)]


def step(state: StepState, w: int, k: int) -> StepState:
    t = state.t
    if t >= MAX_STEPS:
        raise ValueError("no step after t=79")
    a, b, c, d, e = state.words
    new_a = (ft(t, b, c, d) + e + rotl(a, 5) + w + k) & MASK32
    return StepState(new_a, a, rotl(b, 30), c, d, t + 1)


def feed_forward(final: StepState, cv: Sequence[int] = IV) -> tuple[int, ...]:
    return tuple((x + h) & MASK32 for x, h in zip(final.words, cv))


def _check_nsteps(nsteps: int) -> None:
    if not 1 <= nsteps <= MAX_STEPS:
        raise ValueError(f"nsteps must be in 1..80, got {nsteps}")


def compress(cv: Sequence[int], block: Sequence[int], nsteps: int = MAX_STEPS) -> tuple[tuple[int, ...], StepTrace]:
    """Run ``nsteps`` steps from ``cv`` and apply the Davies-Meyer feed-forward.

    The feed-forward is applied for every ``nsteps``, including reduced ones.
    """
    _check_nsteps(nsteps)
    w = expand_message(block, nsteps)
    state = StepState.initial(cv)
    states = [state]
    for t in range(nsteps):
        state = step(state, w[t], round_constant(t))
        states.append(state)
    digest = feed_forward(state, cv)
    return digest, StepTrace(tuple(states), digest)


def sha1_block(block: Sequence[int], nsteps: int = MAX_STEPS) -> tuple[int, ...]:
    return compress(IV, block, nsteps)[0]


def abstract_trace(block: Sequence[int], nsteps: int, abstracted: Iterable[int],
                   cv: Sequence[int] = IV) -> StepTrace:
    """Forward run where each step in ``abstracted`` is the identity map."""
    _check_nsteps(nsteps)
    skip = set(abstracted)
    w = expand_message(block, nsteps)
    state = StepState.initial(cv)
    states = [state]
    for t in range(nsteps):
        if t in skip:
            state = StepState(*state.words, t=t + 1)
        else:
            state = step(state, w[t], round_constant(t))
        states.append(state)
    return StepTrace(tuple(states), feed_forward(state, cv))


def pad_message(message: int, length: int) -> tuple[int, ...]:
    """Pad a ``length``-bit message (given as an int, MSB first) into one block."""
    if length < 0 or length > 447:
        raise ValueError(f"message of {length} bits does not fit a single block (max 447)")
    if message < 0 or message >> length:
        raise ValueError("message value does not fit in the stated length")
    bits = (message << 1) | 1
    bits <<= 512 - length - 1
    bits |= length
    return int_to_block(bits)


def pad_bytes(data: bytes) -> tuple[int, ...]:
    return pad_message(int.from_bytes(data, "big"), 8 * len(data))


def padding_mask(length: int) -> dict[int, bool]:
    """Bit positions fixed by padding a ``length``-bit message: the 1, the zeros, the length field."""
    if length < 0 or length > 447:
        raise ValueError(f"message of {length} bits does not fit a single block (max 447)")
    block = pad_message(0, length)
    bits = block_to_int(block)
    return {pos: bool((bits >> (511 - pos)) & 1) for pos in range(length, 512)}


def block_to_int(block: Sequence[int]) -> int:
    out = 0
    for w in block:
        out = (out << 32) | (w & MASK32)
    return out


def int_to_block(value: int) -> tuple[int, ...]:
    return tuple((value >> (32 * (15 - i))) & MASK32 for i in range(16))


def block_to_hex(block: Sequence[int]) -> str:
    return "".join(f"{w:08x}" for w in block)


def block_from_hex(text: str) -> tuple[int, ...]:
    text = text.strip().lower()
    if len(text) != 128:
        raise ValueError(f"message block must be 128 hex characters, got {len(text)}")
    return tuple(int(text[8 * i:8 * i + 8], 16) for i in range(16))


def digest_to_hex(digest: Sequence[int]) -> str:
    return "".join(f"{w:08x}" for w in digest)


def digest_from_hex(text: str) -> tuple[int, ...]:
    text = text.strip().lower()
    if len(text) != 40:
        raise ValueError(f"digest must be 40 hex characters, got {len(text)}")
    return tuple(int(text[8 * i:8 * i + 8], 16) for i in range(5))


def message_bit(block: Sequence[int], pos: int) -> bool:
    """Bit ``pos`` of the block, counting from the first (most significant) message bit."""
    return bool((block[pos // 32] >> (31 - pos % 32)) & 1)
