"""Weighted random-walk tip selection over cumulative weights."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import NoSuccessors, WalkTimeout
from .ledger import DagState


@dataclass(frozen=True)
class WalkParams:
    walkers: int = 2
    start_depth: int = 10
    max_steps: int | None = None  # default 10 * |DAG|
    retries: int = 10             # re-walks when a walker repeats a tip

    def __post_init__(self):
        if self.walkers < 1:
            raise ValueError("need at least one walker")
        if self.start_depth < 0:
            raise ValueError("start depth must be nonnegative")


def transition_probabilities(x: str, candidates: Sequence[str], cw: Mapping[str, float]) -> np.ndarray:
    """Softmax over CW(y) - CW(x) for the candidate successors y of x."""
    if len(candidates) == 0:
        raise NoSuccessors(x)
    z = np.array([cw[y] - cw[x] for y in candidates], dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def heights(dag: DagState) -> dict[str, int]:
    """Longest-path distance from genesis."""
    h: dict[str, int] = {}
    for tid, tx in dag.transactions.items():
        h[tid] = 1 + max((h[p] for p in tx.parents), default=-1)
    return h


def entry_point(dag: DagState, depth: int) -> str:
    """Highest-CW transaction ``depth`` levels below the tallest tip (genesis if shallower)."""
    h = heights(dag)
    target = max(0, max(h.values()) - depth)
    level = [t for t in dag.transactions if h[t] == target]
    return max(level, key=dag.cumulative_weight)  # max keeps the earliest on ties


class TransitionTable:
    """Dense snapshot of the walk's Markov chain for fast repeated sampling."""

    def __init__(self, dag: DagState):
        self.nodes = list(dag.transactions)
        self.index = {t: i for i, t in enumerate(self.nodes)}
        cw = dag.cw_map()
        succ = [dag.approvers(t) for t in self.nodes]
        width = max(1, max(len(s) for s in succ))
        n = len(self.nodes)
        self.succ = np.full((n, width), -1, dtype=np.int64)
        self.cum = np.full((n, width), 2.0)
        self.is_tip = np.zeros(n, dtype=bool)
        for i, (t, s) in enumerate(zip(self.nodes, succ)):
            if not s:
                self.is_tip[i] = True
                continue
            p = transition_probabilities(t, s, cw)
            c = np.cumsum(p)
            c[-1] = 1.0
            self.succ[i, : len(s)] = [self.index[y] for y in s]
            self.cum[i, : len(s)] = c

    def walk(self, start: str, rng: np.random.Generator, max_steps: int) -> str:
        i = self.index[start]
        for _ in range(max_steps + 1):
            if self.is_tip[i]:
                return self.nodes[i]
            u = rng.random()
            i = int(self.succ[i, int(np.count_nonzero(self.cum[i] <= u))])
        raise WalkTimeout(f"walk from {start[:12]} exceeded {max_steps} steps")

    def walk_many(self, start: str, n: int, rng: np.random.Generator, max_steps: int) -> np.ndarray:
        """Run ``n`` independent walks in lockstep; returns tip indices."""
        state = np.full(n, self.index[start], dtype=np.int64)
        for _ in range(max_steps + 1):
            live = ~self.is_tip[state]
            if not live.any():
                return state
            s = state[live]
            u = rng.random(s.size)
            pick = (self.cum[s] <= u[:, None]).sum(axis=1)
            state[live] = self.succ[s, pick]
        raise WalkTimeout(f"walks exceeded {max_steps} steps")


def random_walk(dag: DagState, start: str, rng: np.random.Generator,
                max_steps: int | None = None) -> str:
    steps = 10 * len(dag) if max_steps is None else max_steps
    return TransitionTable(dag).walk(start, rng, steps)


def tip_select(dag: DagState, wp: WalkParams, rng: np.random.Generator) -> tuple[str, ...]:
    """Tips reached by ``wp.walkers`` walks from a common entry point.

    A walker that lands on an already chosen tip walks again, up to
    ``wp.retries`` times; after that the repeat is kept (this is the only way to
    get duplicates when fewer tips are reachable than walkers).
    """
    table = TransitionTable(dag)
    steps = 10 * len(dag) if wp.max_steps is None else wp.max_steps
    start = entry_point(dag, wp.start_depth)
    chosen: list[str] = []
    for _ in range(wp.walkers):
        tip = table.walk(start, rng, steps)
        for _ in range(wp.retries):
            if tip not in chosen:
                break
            tip = table.walk(start, rng, steps)
        chosen.append(tip)
    return tuple(chosen)
