"""Two-player stage game, strategy machines, match simulation and the
discounted cooperation analysis built on top of them.

Everything here is pure and state-passing: callers own the randomness
stream, so identical inputs always reproduce identical traces.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence


class Action(Enum):
    """One move of the stage game, serialized as C/D in every trace."""

    COOPERATE = "C"
    DEFECT = "D"


C = Action.COOPERATE
D = Action.DEFECT


@dataclass(frozen=True)
class PayoffMatrix:
    """Stage rewards (temptation, reward, punishment, sucker).

    Construction enforces the standard dilemma ordering T > R > P > S and
    the joint condition 2R > T + S, so alternating exploitation can never
    beat steady mutual cooperation.
    """

    temptation: float
    reward: float
    punishment: float
    sucker: float

    def __post_init__(self) -> None:
        t, r, p, s = self.temptation, self.reward, self.punishment, self.sucker
        if not (t > r > p > s):
            raise ValueError(f"payoff ordering must satisfy T > R > P > S, got {(t, r, p, s)}")
        if not (2 * r > t + s):
            raise ValueError(f"payoffs must satisfy 2R > T + S, got {(t, r, p, s)}")


DEFAULT_MATRIX = PayoffMatrix(temptation=5.0, reward=3.0, punishment=1.0, sucker=0.0)


class StrategyKind(Enum):
    ALL_COOPERATE = "allc"
    ALL_DEFECT = "alld"
    GRIM_TRIGGER = "grim"
    TIT_FOR_TAT = "tft"
    TIT_FOR_TWO_TATS = "tf2t"
    RANDOM_COIN = "coin"


@dataclass(frozen=True)
class StrategyId:
    """A playable strategy; RANDOM_COIN carries its cooperation probability."""

    kind: StrategyKind
    p: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind is StrategyKind.RANDOM_COIN:
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError(f"coin strategy needs p in [0, 1], got {self.p}")
        elif self.p is not None:
            raise ValueError(f"{self.kind.value} takes no parameter")


ALLC = StrategyId(StrategyKind.ALL_COOPERATE)
ALLD = StrategyId(StrategyKind.ALL_DEFECT)
GRIM = StrategyId(StrategyKind.GRIM_TRIGGER)
TFT = StrategyId(StrategyKind.TIT_FOR_TAT)
TF2T = StrategyId(StrategyKind.TIT_FOR_TWO_TATS)


def coin(p: float) -> StrategyId:
    return StrategyId(StrategyKind.RANDOM_COIN, p)


def strategy_name(sid: StrategyId) -> str:
    if sid.kind is StrategyKind.RANDOM_COIN:
        return f"coin:{sid.p:g}"
    return sid.kind.value


def parse_strategy(text: str) -> StrategyId:
    """Parse a strategy name such as "tft" or "coin:0.7" ("coin" means 0.5)."""
    name, _, arg = text.strip().partition(":")
    for kind in StrategyKind:
        if kind.value == name:
            if kind is StrategyKind.RANDOM_COIN:
                return coin(float(arg) if arg else 0.5)
            if arg:
                raise ValueError(f"strategy {name!r} takes no parameter")
            return StrategyId(kind)
    valid = ", ".join(k.value for k in StrategyKind)
    raise ValueError(f"unknown strategy {text!r} (valid: {valid})")


@dataclass(frozen=True)
class StrategyState:
    """Per-player memo of what has been observed so far.

    Only the field relevant to the strategy kind is ever moved off its
    neutral value; the rest stay False/0/None.
    """

    id: StrategyId
    triggered: bool = False
    recent_opponent_defections: int = 0
    last_opponent_action: Optional[Action] = None


def initial_state(sid: StrategyId) -> StrategyState:
    return StrategyState(id=sid)


def _trailing_defections(history: Sequence[Action]) -> int:
    run = 0
    for act in reversed(history):
        if act is not D or run == 2:
            break
        run += 1
    return run


def next_action(
    state: StrategyState,
    opponent_history: Sequence[Action],
    rng: Optional[random.Random] = None,
) -> tuple[Action, StrategyState]:
    """Choose the next move from the realized opponent history.

    The history holds post-noise actions in stage order. The returned
    state has the strategy's own memo field synced to that history. A
    randomness source is consulted only by the coin strategy.
    """
    kind = state.id.kind
    if kind is StrategyKind.ALL_COOPERATE:
        return C, state
    if kind is StrategyKind.ALL_DEFECT:
        return D, state
    if kind is StrategyKind.RANDOM_COIN:
        if rng is None:
            raise ValueError("coin strategy needs a randomness source")
        act = C if rng.random() < state.id.p else D
        return act, state
    if kind is StrategyKind.TIT_FOR_TAT:
        last = opponent_history[-1] if opponent_history else None
        act = D if last is D else C
        return act, replace(state, last_opponent_action=last)
    if kind is StrategyKind.GRIM_TRIGGER:
        fired = state.triggered or any(a is D for a in opponent_history)
        return (D if fired else C), replace(state, triggered=fired)
    # two defections in a row, counted from the end of the history
    run = _trailing_defections(opponent_history)
    act = D if run >= 2 else C
    return act, replace(state, recent_opponent_defections=run)


def stage_payoffs(a1: Action, a2: Action, m: PayoffMatrix = DEFAULT_MATRIX) -> tuple[float, float]:
    """Payoff pair for one joint move."""
    if a1 is C:
        return (m.reward, m.reward) if a2 is C else (m.sucker, m.temptation)
    return (m.temptation, m.sucker) if a2 is C else (m.punishment, m.punishment)


@dataclass(frozen=True)
class StageOutcome:
    stage: int
    intended: tuple[Action, Action]
    realized: tuple[Action, Action]
    payoffs: tuple[float, float]


@dataclass(frozen=True)
class MatchTrace:
    """Full record of one repeated match."""

    stages: tuple[StageOutcome, ...]
    noise: float
    seed: int


def play_match(
    s1: StrategyId,
    s2: StrategyId,
    stages: int,
    noise: float = 0.0,
    seed: int = 0,
    matrix: PayoffMatrix = DEFAULT_MATRIX,
) -> MatchTrace:
    """Simulate a repeated match of the given length.

    Each intended action passes through an independent flip channel with
    probability ``noise``; both sides observe only realized actions. Draw
    order per stage is fixed (player 1 intention, player 2 intention,
    then the two flip draws), and flip draws are skipped entirely at
    noise 0, so deterministic pairings consume no randomness at all.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must be in [0, 1)")
    rng = random.Random(seed)
    st1, st2 = initial_state(s1), initial_state(s2)
    hist1: list[Action] = []  # realized actions of player 2, as seen by player 1
    hist2: list[Action] = []
    out = []
    for n in range(1, stages + 1):
        a1, st1 = next_action(st1, hist1, rng)
        a2, st2 = next_action(st2, hist2, rng)
        r1, r2 = a1, a2
        if noise > 0.0:
            if rng.random() < noise:
                r1 = D if r1 is C else C
            if rng.random() < noise:
                r2 = D if r2 is C else C
        out.append(StageOutcome(n, (a1, a2), (r1, r2), stage_payoffs(r1, r2, matrix)))
        hist1.append(r2)
        hist2.append(r1)
    return MatchTrace(stages=tuple(out), noise=noise, seed=seed)


@dataclass(frozen=True)
class DiscountSeries:
    """Cumulative discounted payoffs per player, stage weight delta**(n-1)."""

    delta: float
    cumulative: tuple[tuple[float, ...], tuple[float, ...]]


def discounted_series(trace: MatchTrace, delta: float) -> DiscountSeries:
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must be in [0, 1)")
    cum1: list[float] = []
    cum2: list[float] = []
    total1 = total2 = 0.0
    weight = 1.0
    for outcome in trace.stages:
        total1 += weight * outcome.payoffs[0]
        total2 += weight * outcome.payoffs[1]
        cum1.append(total1)
        cum2.append(total2)
        weight *= delta
    return DiscountSeries(delta=delta, cumulative=(tuple(cum1), tuple(cum2)))


_PUNISHERS = (StrategyKind.GRIM_TRIGGER, StrategyKind.TIT_FOR_TAT, StrategyKind.TIT_FOR_TWO_TATS)


def _check_punisher(punisher: StrategyId) -> None:
    if punisher.kind not in _PUNISHERS:
        valid = ", ".join(k.value for k in _PUNISHERS)
        raise ValueError(f"unsupported punisher {strategy_name(punisher)!r} (valid: {valid})")


def deviation_payoffs(m: PayoffMatrix, punisher: StrategyId, stages: int) -> tuple[float, ...]:
    """Undiscounted per-stage income of an all-defect deviator facing the punisher.

    Grim and tit-for-tat punish from stage 2 on; the two-tats punisher
    lets the temptation payoff through twice before switching.
    """
    _check_punisher(punisher)
    free = 2 if punisher.kind is StrategyKind.TIT_FOR_TWO_TATS else 1
    return tuple(m.temptation if n <= free else m.punishment for n in range(1, stages + 1))


def stream_values(m: PayoffMatrix, delta: float, punisher: StrategyId) -> tuple[float, float]:
    """Infinite-horizon discounted totals (steady cooperation, all-D deviation).

    Cooperation earns the reward forever: R / (1 - delta). The deviation
    stream collects the temptation once (twice against the two-tats
    punisher) and the punishment payoff from then on.
    """
    _check_punisher(punisher)
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must be in [0, 1)")
    coop_total = m.reward / (1.0 - delta)
    tail = m.punishment / (1.0 - delta)
    if punisher.kind is StrategyKind.TIT_FOR_TWO_TATS:
        dev_total = m.temptation + delta * m.temptation + delta * delta * tail
    else:
        dev_total = m.temptation + delta * tail
    return coop_total, dev_total


def cooperation_threshold(m: PayoffMatrix, punisher: StrategyId) -> float:
    """Smallest discount factor at which steady cooperation beats deviating.

    Closed form: (T - R) / (T - P) against grim or tit-for-tat, and its
    square root against the two-tats punisher (the extra free stage means
    the discount has to bite one stage later).
    """
    _check_punisher(punisher)
    base = (m.temptation - m.reward) / (m.temptation - m.punishment)
    if punisher.kind is StrategyKind.TIT_FOR_TWO_TATS:
        return math.sqrt(base)
    return base


def crossover_stage(
    m: PayoffMatrix,
    delta: float,
    punisher: StrategyId,
    max_stages: int,
) -> Optional[int]:
    """First stage where cumulative discounted cooperation overtakes deviation.

    Both cumulatives are partial sums of the streams behind stream_values.
    Returns None when no stage up to max_stages crosses, which is the
    case for every horizon when delta sits below the cooperation threshold.
    """
    _check_punisher(punisher)
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must be in [0, 1)")
    if max_stages < 1:
        raise ValueError("max_stages must be >= 1")
    dev = deviation_payoffs(m, punisher, max_stages)
    coop_cum = dev_cum = 0.0
    weight = 1.0
    for n in range(1, max_stages + 1):
        coop_cum += weight * m.reward
        dev_cum += weight * dev[n - 1]
        if coop_cum >= dev_cum:
            return n
        weight *= delta
    return None
