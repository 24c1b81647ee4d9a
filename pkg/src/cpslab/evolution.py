"""Constant-size Moran birth-death process over a strategy population.

Fitness comes from an undiscounted round robin: every unordered pair of
members plays one match per round. Two engines produce those scores. At
zero noise with no coin players every pairing is deterministic, so pair
totals are computed once per (strategy, strategy) pair and composed by
counts; this is exactly equivalent to playing the matches out, because a
deterministic match consumes no randomness. Noisy or coin-bearing rounds
run in a compiled kernel that samples flip positions sparsely from the
geometric gap distribution instead of drawing per action.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .game import (
    DEFAULT_MATRIX,
    PayoffMatrix,
    StrategyId,
    StrategyKind,
    play_match,
)


@dataclass(frozen=True)
class Population:
    """Ordered members of a constant-size population."""

    members: tuple[StrategyId, ...]

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("population needs at least 2 members")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class MoranConfig:
    """Parameters of one population experiment (all replicates share them)."""

    initial_counts: Mapping[StrategyId, int]
    rounds_max: int = 1000
    match_stages: int = 100
    noise: float = 0.0
    seed: int = 0
    replicates: int = 1

    def __post_init__(self) -> None:
        counts = dict(self.initial_counts)
        if any(c < 0 for c in counts.values()):
            raise ValueError("initial counts must be non-negative")
        if sum(counts.values()) < 2:
            raise ValueError("initial counts must sum to at least 2")
        if self.rounds_max < 1:
            raise ValueError("rounds_max must be >= 1")
        if self.match_stages < 1:
            raise ValueError("match_stages must be >= 1")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def population_size(self) -> int:
        return sum(self.initial_counts.values())


@dataclass(frozen=True)
class Fixation:
    winner: StrategyId
    round: int


@dataclass(frozen=True)
class MoranTrace:
    """Per-round strategy counts of one replicate, ending at fixation or
    at the round cap. Row 0 is the initial composition."""

    strategies: tuple[StrategyId, ...]
    counts: tuple[tuple[int, ...], ...]
    fixation: Optional[Fixation]
    seed: int


# strategy kind codes and transition tables for the compiled engine;
# row 5 is the coin, which draws its intention instead of using a table
_KIND_CODE = {
    StrategyKind.ALL_COOPERATE: 0,
    StrategyKind.ALL_DEFECT: 1,
    StrategyKind.GRIM_TRIGGER: 2,
    StrategyKind.TIT_FOR_TAT: 3,
    StrategyKind.TIT_FOR_TWO_TATS: 4,
    StrategyKind.RANDOM_COIN: 5,
}

_INTEND = np.zeros((6, 3), dtype=np.uint8)
_INTEND[1, :] = 1  # all-defect
_INTEND[2] = (0, 1, 1)  # grim: state 1 = triggered
_INTEND[3] = (0, 1, 1)  # tit-for-tat: state = last opponent action
_INTEND[4] = (0, 0, 1)  # two-tats: state = trailing defection run, capped

_UPD = np.zeros((6, 3, 2), dtype=np.uint8)
_UPD[2, 0] = (0, 1)
_UPD[2, 1] = (1, 1)
_UPD[3, 0] = (0, 1)
_UPD[3, 1] = (0, 1)
_UPD[4, 0] = (0, 1)
_UPD[4, 1] = (0, 2)
_UPD[4, 2] = (0, 2)


def _round_scores_impl(kinds, pvals, iu, ju, stages, eps, intend, upd, pay, rng):
    """One full round robin; returns total score per member.

    Noise flips are generated by jumping between flip positions with
    geometric gaps over the flattened slot sequence (2 slots per stage,
    first mover on even slots). floor(log(1-u)/log(1-eps)) is the gap law;
    1-u keeps the argument away from log(0).
    """
    n = kinds.shape[0]
    fit = np.zeros(n)
    inv_log = 1.0 / math.log1p(-eps) if eps > 0.0 else 0.0
    total_slots = 2 * stages
    for m in range(iu.shape[0]):
        a = iu[m]
        b = ju[m]
        ka = kinds[a]
        kb = kinds[b]
        sa = np.uint8(0)
        sb = np.uint8(0)
        score_a = 0.0
        score_b = 0.0
        if eps > 0.0:
            nxt = int(math.log(1.0 - rng.random()) * inv_log)
        else:
            nxt = total_slots
        for t in range(stages):
            if ka == 5:
                ia = 0 if rng.random() < pvals[a] else 1
            else:
                ia = int(intend[ka, sa])
            if kb == 5:
                ib = 0 if rng.random() < pvals[b] else 1
            else:
                ib = int(intend[kb, sb])
            sl = 2 * t
            if nxt == sl:
                ia ^= 1
                nxt = sl + 1 + int(math.log(1.0 - rng.random()) * inv_log)
            if nxt == sl + 1:
                ib ^= 1
                nxt = sl + 2 + int(math.log(1.0 - rng.random()) * inv_log)
            score_a += pay[ia, ib]
            score_b += pay[ib, ia]
            sa = upd[ka, sa, ib]
            sb = upd[kb, sb, ia]
        fit[a] += score_a
        fit[b] += score_b
    return fit


_ROUND_KERNEL = None


def _get_kernel():
    # deferred so that noise-free runs never pay the compiler import
    global _ROUND_KERNEL
    if _ROUND_KERNEL is None:
        from numba import njit

        _ROUND_KERNEL = njit(cache=True)(_round_scores_impl)
    return _ROUND_KERNEL


@lru_cache(maxsize=None)
def _pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, 1)
    return iu.astype(np.int64), ju.astype(np.int64)


@lru_cache(maxsize=None)
def _pair_scores(s1: StrategyId, s2: StrategyId, stages: int, matrix: PayoffMatrix):
    trace = play_match(s1, s2, stages, 0.0, 0, matrix)
    total1 = sum(o.payoffs[0] for o in trace.stages)
    total2 = sum(o.payoffs[1] for o in trace.stages)
    return total1, total2


def _pure_fitness(members, stages, matrix) -> np.ndarray:
    counts = Counter(members)
    per_strategy = {}
    for sid in counts:
        total = 0.0
        for other, k in counts.items():
            mine, _ = _pair_scores(sid, other, stages, matrix)
            opponents = k - 1 if other == sid else k
            total += mine * opponents
        per_strategy[sid] = total
    return np.array([per_strategy[s] for s in members])


def _noisy_fitness(members, stages, eps, rng, matrix) -> np.ndarray:
    n = len(members)
    kinds = np.empty(n, dtype=np.uint8)
    pvals = np.zeros(n)
    for i, sid in enumerate(members):
        kinds[i] = _KIND_CODE[sid.kind]
        if sid.kind is StrategyKind.RANDOM_COIN:
            pvals[i] = sid.p
    iu, ju = _pair_indices(n)
    pay = np.array(
        [
            [matrix.reward, matrix.sucker],
            [matrix.temptation, matrix.punishment],
        ]
    )
    kernel = _get_kernel()
    return kernel(kinds, pvals, iu, ju, stages, eps, _INTEND, _UPD, pay, rng)


def round_robin_fitness(
    pop: Population,
    match_stages: int,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
) -> np.ndarray:
    """Total score of every member over one full round robin.

    Each unordered pair plays one undiscounted match of match_stages
    stages. If any score lands below zero (possible with a negative
    sucker payoff) the whole vector is shifted up so the minimum is zero,
    keeping it usable as selection weights.
    """
    if match_stages < 1:
        raise ValueError("match_stages must be >= 1")
    has_coin = any(s.kind is StrategyKind.RANDOM_COIN for s in pop.members)
    if noise == 0.0 and not has_coin:
        fit = _pure_fitness(pop.members, match_stages, matrix)
    else:
        if rng is None:
            raise ValueError("noisy or coin-bearing rounds need a randomness source")
        fit = _noisy_fitness(pop.members, match_stages, noise, rng, matrix)
    low = fit.min()
    if low < 0.0:
        fit = fit - low
    return fit


def moran_step(pop: Population, fitness, rng) -> Population:
    """One birth-death update.

    Birth is drawn proportionally to fitness (uniformly if every fitness
    is zero), death uniformly over all members including the parent; the
    dead slot receives a copy of the parent. Draw order is fixed: birth
    first, then death.
    """
    fit = np.asarray(fitness, dtype=float)
    n = pop.size
    if fit.shape != (n,):
        raise ValueError(f"fitness length {fit.shape} does not match population size {n}")
    total = fit.sum()
    if total > 0.0:
        u = rng.random() * total
        birth = int(np.searchsorted(np.cumsum(fit), u, side="right"))
        if birth >= n:
            birth = n - 1
    else:
        birth = int(rng.integers(n))
    death = int(rng.integers(n))
    members = list(pop.members)
    members[death] = members[birth]
    return Population(tuple(members))


def _counts_row(strategies, members) -> tuple[int, ...]:
    counts = Counter(members)
    return tuple(counts.get(s, 0) for s in strategies)


def _fixation_at(strategies, row, round_index, size) -> Optional[Fixation]:
    for sid, count in zip(strategies, row):
        if count == size:
            return Fixation(winner=sid, round=round_index)
    return None


def _run_replicate(cfg: MoranConfig, strategies, members, seed: int) -> MoranTrace:
    rng = np.random.default_rng(seed)
    pop = Population(members)
    rows = [_counts_row(strategies, pop.members)]
    fixation = _fixation_at(strategies, rows[0], 0, pop.size)
    round_index = 0
    while fixation is None and round_index < cfg.rounds_max:
        round_index += 1
        fit = round_robin_fitness(pop, cfg.match_stages, cfg.noise, rng)
        pop = moran_step(pop, fit, rng)
        row = _counts_row(strategies, pop.members)
        rows.append(row)
        fixation = _fixation_at(strategies, row, round_index, pop.size)
    return MoranTrace(strategies=strategies, counts=tuple(rows), fixation=fixation, seed=seed)


def run_moran(cfg: MoranConfig) -> list[MoranTrace]:
    """Run every replicate of the configured experiment.

    Replicate r gets its own integer seed (word r of the root seed
    sequence built from cfg.seed), recorded in its trace, so any single
    replicate can be reproduced standalone.
    """
    strategies = tuple(cfg.initial_counts)
    members = tuple(s for s in strategies for _ in range(cfg.initial_counts[s]))
    child_seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.replicates, np.uint64)
    return [
        _run_replicate(cfg, strategies, members, int(child_seeds[r]))
        for r in range(cfg.replicates)
    ]


def trace_winner(trace: MoranTrace) -> Optional[StrategyId]:
    """Fixation winner, or the unique plurality holder of the final round.

    Returns None when the final round is tied at the top."""
    if trace.fixation is not None:
        return trace.fixation.winner
    final = trace.counts[-1]
    best = max(final)
    leaders = [s for s, c in zip(trace.strategies, final) if c == best]
    return leaders[0] if len(leaders) == 1 else None
