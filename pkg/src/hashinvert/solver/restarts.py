"""Restart schedules and the discounted-UCB arbiter that picks among them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

POLICY_KINDS = ("uniform", "linear", "luby", "geometric")


def luby(i: int) -> int:
    """i-th term (1-based) of the Luby sequence 1,1,2,1,1,2,4,..."""
    if i < 1:
        raise ValueError("luby index starts at 1")
    while True:
        k = 1
        while (1 << k) - 1 < i:
            k += 1
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1


@dataclass
class RestartPolicy:
    """One restart schedule; ``next_limit`` advances this arm's own counter."""

    kind: str
    base: int = 512
    geo_base: float = 100.0
    geo_factor: float = 1.5
    selections: int = 0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown restart policy {self.kind!r}")
        if self.base <= 0 or self.geo_base <= 0 or self.geo_factor < 1.0:
            raise ValueError("restart bases must be positive and the geometric factor >= 1")

    def next_limit(self) -> int:
        self.selections += 1
        k = self.selections
        if self.kind == "uniform":
            limit = self.base
        elif self.kind == "linear":
            limit = self.base * k
        elif self.kind == "luby":
            limit = self.base * luby(k)
        else:
            limit = self.geo_base * self.geo_factor ** (k - 1)
        return max(1, int(round(limit)))


@dataclass
class DiscountedUCB:
    """Discounted UCB over a fixed set of arms.

    Every update discounts all statistics by ``gamma`` before crediting the
    played arm, so old rewards fade and the arbiter can follow a drifting
    best arm. ``bound`` is the reward range used in the exploration bonus.
    """

    n_arms: int = 4
    gamma: float = 0.99
    xi: float = 0.5
    bound: float = 0.5
    rewards: list[float] = field(default_factory=list)
    counts: list[float] = field(default_factory=list)
    total: float = 0.0
    current: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.xi <= 0 or self.bound <= 0:
            raise ValueError("xi and bound must be positive")
        if not self.rewards:
            self.rewards = [0.0] * self.n_arms
        if not self.counts:
            self.counts = [0.0] * self.n_arms

    def scores(self) -> list[float]:
        log_n = math.log(self.total) if self.total > 1.0 else 0.0
        return [
            r / n + 2.0 * self.bound * math.sqrt(self.xi * log_n / n)
            for r, n in zip(self.rewards, self.counts)
        ]

    def select(self) -> int:
        for arm, n in enumerate(self.counts):
            if n == 0.0:
                self.current = arm
                return arm
        scores = self.scores()
        best = max(scores)
        self.current = scores.index(best)
        return self.current

    @staticmethod
    def reward(conflicts: int, lbd_sum: int) -> float:
        """Reciprocal of the window's mean LBD, in [0, 1]; 0 for an empty window."""
        if conflicts <= 0 or lbd_sum <= 0:
            return 0.0
        return min(1.0, conflicts / lbd_sum)

    def update(self, conflicts: int, lbd_sum: int, arm: int | None = None) -> float:
        arm = self.current if arm is None else arm
        if arm is None:
            raise RuntimeError("update called before select")
        r = self.reward(conflicts, lbd_sum)
        self.update_reward(arm, r)
        return r

    def update_reward(self, arm: int, r: float) -> None:
        g = self.gamma
        self.rewards = [x * g for x in self.rewards]
        self.counts = [x * g for x in self.counts]
        self.total *= g
        self.rewards[arm] += r
        self.counts[arm] += 1.0
        self.total += 1.0
