"""Discrete-time simulation of a four-layer software-defined system.

Each time slot walks one control cycle: sensors at the bottom produce a
batch of good/bad events per agent, a controller relays them upward as
typed messages, and each top-layer agent updates an exponentially
weighted estimate of system health. While the estimate sits above its
threshold the agent does nothing; once it drops, the agent plays one
stage of the cooperate/defect game against its peer and, when it
cooperates, may spend resources on a recovery that damps the threat
intensity of the following slot.

Two independent random streams (event generation and agent decisions)
are spawned from the configured seed, so runs with identical event
streams stay comparable even when the agents behave differently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .game import (
    Action,
    DEFAULT_MATRIX,
    PayoffMatrix,
    StrategyId,
    TFT,
    initial_state,
    next_action,
    parse_strategy,
    stage_payoffs,
    strategy_name,
)


class ConfigError(ValueError):
    """Invalid scenario configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field {field_name!r}: {message}")


class MessageKind(IntEnum):
    STATUS_REPORT = 1
    EVENT_REPORT = 2
    AGENT_PROCESSING = 3
    DECISION_MSG = 4
    FLOW_RULE = 5


@dataclass(frozen=True)
class EventBatch:
    """Good/total event counts one agent saw in one slot."""

    slot: int
    good: int
    total: int

    def __post_init__(self) -> None:
        if not 0 <= self.good <= self.total:
            raise ValueError(f"need 0 <= good <= total, got {self.good}/{self.total}")

    @property
    def bad(self) -> int:
        return self.total - self.good


@dataclass(frozen=True)
class ThreatWindow:
    start: int
    end: int
    p_bad: float

    def __post_init__(self) -> None:
        if self.start < 1 or self.end < self.start:
            raise ValueError(f"need 1 <= start <= end, got [{self.start}, {self.end}]")
        if not 0.0 <= self.p_bad <= 1.0:
            raise ValueError(f"p_bad must be in [0, 1], got {self.p_bad}")


@dataclass(frozen=True)
class ThreatSchedule:
    """Non-overlapping threat windows; p_bad is 0 outside all of them.

    Window bounds are inclusive slot indices, slots count from 1."""

    windows: tuple[ThreatWindow, ...] = ()

    def __post_init__(self) -> None:
        ordered = sorted(self.windows, key=lambda w: w.start)
        for a, b in zip(ordered, ordered[1:]):
            if b.start <= a.end:
                raise ValueError(
                    f"windows [{a.start}, {a.end}] and [{b.start}, {b.end}] overlap"
                )

    def p_bad(self, slot: int) -> float:
        for w in self.windows:
            if w.start <= slot <= w.end:
                return w.p_bad
        return 0.0


@dataclass(frozen=True)
class Decision:
    """What one agent did this slot: nothing, or one game action with an
    optional recovery execution (cooperators only)."""

    action: Optional[Action] = None
    executed_recovery: bool = False

    def __post_init__(self) -> None:
        if self.executed_recovery and self.action is not Action.COOPERATE:
            raise ValueError("only a cooperating agent can execute recovery")

    @property
    def played(self) -> bool:
        return self.action is not None


NOOP = Decision()


@dataclass(frozen=True)
class AgentState:
    """One managing agent: health estimator plus game bookkeeping.

    The estimator starts at 1 (healthy) and moves by
    status * alpha + s * (1 - alpha) where s is the slot's good-event
    ratio. game_history holds realized (own, peer) action pairs."""

    id: int
    alpha: float
    threshold: float
    strategy: StrategyId
    coin_p: float
    status: float = 1.0
    resources_spent: float = 0.0
    game_history: tuple[tuple[Action, Action], ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 <= self.coin_p <= 1.0:
            raise ValueError(f"coin_p must be in [0, 1], got {self.coin_p}")
        if not 0.0 <= self.status <= 1.0:
            raise ValueError(f"status must be in [0, 1], got {self.status}")


@dataclass(frozen=True)
class WorldState:
    """Agents plus the threat damping earned by the previous slot."""

    agents: tuple[AgentState, ...]
    intensity_scale: float = 1.0
    last_payoffs: tuple[Optional[float], ...] = ()


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    threat_p: float
    events: tuple[EventBatch, ...]
    statuses: tuple[float, ...]
    decisions: tuple[Decision, ...]
    payoffs: tuple[Optional[float], ...]
    resources: tuple[float, ...]
    messages: tuple[MessageKind, ...]


@dataclass(frozen=True)
class CpsTrace:
    config: "CpsConfig"
    seed: int
    slots: tuple[SlotRecord, ...]


_CONFIG_KEYS = (
    "agents",
    "slots",
    "events_per_agent",
    "alpha",
    "threshold",
    "strategy",
    "coin_p",
    "mitigation",
    "recovery_cost",
    "matrix",
    "threat_windows",
    "seed",
)


def _as_int(raw: dict, key: str, minimum: int) -> int:
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {value}")
    return value


def _as_float(raw: dict, key: str) -> float:
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"must be a number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class CpsConfig:
    """Fully-defaulted scenario; every field is overridable from JSON."""

    agents: int = 2
    slots: int = 100
    events_per_agent: int = 100
    alpha: float = 0.8
    threshold: float = 0.8
    strategy: StrategyId = TFT
    coin_p: float = 0.5
    mitigation: float = 0.5
    recovery_cost: float = 1.0
    matrix: PayoffMatrix = DEFAULT_MATRIX
    threat_windows: ThreatSchedule = field(default_factory=ThreatSchedule)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.agents < 1:
            raise ConfigError("agents", f"must be >= 1, got {self.agents}")
        if self.slots < 1:
            raise ConfigError("slots", f"must be >= 1, got {self.slots}")
        if self.events_per_agent < 1:
            raise ConfigError("events_per_agent", f"must be >= 1, got {self.events_per_agent}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold", f"must be in (0, 1), got {self.threshold}")
        if not 0.0 <= self.coin_p <= 1.0:
            raise ConfigError("coin_p", f"must be in [0, 1], got {self.coin_p}")
        if not 0.0 <= self.mitigation <= 1.0:
            raise ConfigError("mitigation", f"must be in [0, 1], got {self.mitigation}")
        if self.recovery_cost < 0.0:
            raise ConfigError("recovery_cost", f"must be >= 0, got {self.recovery_cost}")

    @classmethod
    def from_dict(cls, raw: dict) -> "CpsConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config", "must be a JSON object")
        for key in raw:
            if key not in _CONFIG_KEYS:
                raise ConfigError(key, "unknown field")
        kwargs = {}
        for key in ("agents", "slots", "events_per_agent"):
            if key in raw:
                kwargs[key] = _as_int(raw, key, 1)
        if "seed" in raw:
            value = raw["seed"]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("seed", f"must be an integer, got {value!r}")
            kwargs["seed"] = value
        for key in ("alpha", "threshold", "coin_p", "mitigation", "recovery_cost"):
            if key in raw:
                kwargs[key] = _as_float(raw, key)
        if "strategy" in raw:
            if not isinstance(raw["strategy"], str):
                raise ConfigError("strategy", f"must be a string, got {raw['strategy']!r}")
            try:
                kwargs["strategy"] = parse_strategy(raw["strategy"])
            except ValueError as exc:
                raise ConfigError("strategy", str(exc)) from exc
        if "matrix" in raw:
            values = raw["matrix"]
            if (
                not isinstance(values, (list, tuple))
                or len(values) != 4
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values)
            ):
                raise ConfigError("matrix", f"must be a list of 4 numbers [T, R, P, S], got {values!r}")
            try:
                kwargs["matrix"] = PayoffMatrix(*(float(v) for v in values))
            except ValueError as exc:
                raise ConfigError("matrix", str(exc)) from exc
        if "threat_windows" in raw:
            spec = raw["threat_windows"]
            if not isinstance(spec, list):
                raise ConfigError("threat_windows", f"must be a list, got {spec!r}")
            windows = []
            for i, item in enumerate(spec):
                if not isinstance(item, dict) or set(item) != {"start", "end", "p_bad"}:
                    raise ConfigError(
                        "threat_windows",
                        f"window {i} must be an object with keys start, end, p_bad, got {item!r}",
                    )
                try:
                    windows.append(
                        ThreatWindow(
                            start=_as_int(item, "start", 1),
                            end=_as_int(item, "end", 1),
                            p_bad=_as_float(item, "p_bad"),
                        )
                    )
                except ConfigError as exc:
                    raise ConfigError("threat_windows", f"window {i}: {exc}") from exc
                except ValueError as exc:
                    raise ConfigError("threat_windows", f"window {i}: {exc}") from exc
            try:
                kwargs["threat_windows"] = ThreatSchedule(tuple(windows))
            except ValueError as exc:
                raise ConfigError("threat_windows", str(exc)) from exc
        try:
            return cls(**kwargs)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("config", str(exc)) from exc

    def to_dict(self) -> dict:
        m = self.matrix
        return {
            "agents": self.agents,
            "slots": self.slots,
            "events_per_agent": self.events_per_agent,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "strategy": strategy_name(self.strategy),
            "coin_p": self.coin_p,
            "mitigation": self.mitigation,
            "recovery_cost": self.recovery_cost,
            "matrix": [m.temptation, m.reward, m.punishment, m.sucker],
            "threat_windows": [
                {"start": w.start, "end": w.end, "p_bad": w.p_bad}
                for w in self.threat_windows.windows
            ],
            "seed": self.seed,
        }


def generate_slot_events(
    schedule: ThreatSchedule,
    slot: int,
    events_per_agent: int,
    agent_count: int,
    rng: np.random.Generator,
    intensity_scale: float = 1.0,
) -> tuple[EventBatch, ...]:
    """Draw each agent's local view of the slot.

    Every event goes bad independently with the slot's scheduled
    probability times the intensity scale; agents draw their own events,
    so their views differ. The per-event comparison u < p keeps runs on
    the same event stream comparable across different p."""
    if events_per_agent < 1:
        raise ValueError("events_per_agent must be >= 1")
    if agent_count < 1:
        raise ValueError("agent_count must be >= 1")
    p = min(max(schedule.p_bad(slot) * intensity_scale, 0.0), 1.0)
    batches = []
    for _ in range(agent_count):
        bad = int((rng.random(events_per_agent) < p).sum())
        batches.append(EventBatch(slot=slot, good=events_per_agent - bad, total=events_per_agent))
    return tuple(batches)


def update_status(agent: AgentState, batch: EventBatch) -> AgentState:
    """Fold one batch into the health estimator; empty batches are skipped."""
    if batch.total == 0:
        return agent
    s = batch.good / batch.total
    new_status = agent.status * agent.alpha + s * (1.0 - agent.alpha)
    return replace(agent, status=new_status)


def agent_decide(agent: AgentState, peer_history: Sequence[Action], rng) -> Decision:
    """Do nothing while healthy, otherwise play one game stage.

    A cooperating agent tosses a coin_p-weighted coin to decide whether
    it actually executes the costly recovery; defectors never do."""
    if agent.status > agent.threshold:
        return NOOP
    action, _ = next_action(initial_state(agent.strategy), peer_history, rng)
    executed = bool(action is Action.COOPERATE and rng.random() < agent.coin_p)
    return Decision(action=action, executed_recovery=executed)


def _peer_view(own: Action, peers: Sequence[Action]) -> Action:
    # with more than one opponent the observed "peer" is their worst move
    return Action.DEFECT if any(a is Action.DEFECT for a in peers) else Action.COOPERATE


def apply_decisions(
    world: WorldState,
    decisions: Sequence[Decision],
    matrix: PayoffMatrix,
    mitigation: float,
    recovery_cost: float,
) -> WorldState:
    """Charge recoveries, damp the next slot's threat, and score the game.

    Every executed recovery multiplies the next slot's intensity scale by
    (1 - mitigation); the damping lasts one slot. When exactly two agents
    played they score one stage against each other; with more than two,
    each player scores the average stage payoff over the other players
    and observes them as a single aggregate peer. A lone player gets no
    payoff and records no history."""
    if len(decisions) != len(world.agents):
        raise ValueError("one decision per agent required")
    agents = list(world.agents)
    executing = [i for i, d in enumerate(decisions) if d.executed_recovery]
    for i in executing:
        agents[i] = replace(agents[i], resources_spent=agents[i].resources_spent + recovery_cost)
    players = [(i, d.action) for i, d in enumerate(decisions) if d.played]
    payoffs: list[Optional[float]] = [None] * len(agents)
    if len(players) >= 2:
        for i, own in players:
            others = [a for j, a in players if j != i]
            total = sum(stage_payoffs(own, other, matrix)[0] for other in others)
            payoffs[i] = total / len(others)
            observed = _peer_view(own, others)
            agents[i] = replace(
                agents[i], game_history=agents[i].game_history + ((own, observed),)
            )
    scale = (1.0 - mitigation) ** len(executing)
    return WorldState(
        agents=tuple(agents),
        intensity_scale=scale,
        last_payoffs=tuple(payoffs),
    )


def run_cps(config: CpsConfig) -> CpsTrace:
    """Run the slot loop and record the full world log.

    Slot cycle: status reports go up, event batches arrive, every agent
    folds its batch into the estimator and decides, decisions go down,
    and a flow rule is issued only when somebody played. Event and
    decision draws come from two streams spawned from the seed."""
    event_ss, decision_ss = np.random.SeedSequence(config.seed).spawn(2)
    events_rng = np.random.default_rng(event_ss)
    decisions_rng = np.random.default_rng(decision_ss)
    agents = tuple(
        AgentState(
            id=i,
            alpha=config.alpha,
            threshold=config.threshold,
            strategy=config.strategy,
            coin_p=config.coin_p,
        )
        for i in range(config.agents)
    )
    world = WorldState(agents=agents, last_payoffs=(None,) * config.agents)
    records = []
    for slot in range(1, config.slots + 1):
        effective_p = min(config.threat_windows.p_bad(slot) * world.intensity_scale, 1.0)
        batches = generate_slot_events(
            config.threat_windows,
            slot,
            config.events_per_agent,
            config.agents,
            events_rng,
            world.intensity_scale,
        )
        updated = tuple(update_status(a, b) for a, b in zip(world.agents, batches))
        decisions = []
        for agent in updated:
            peer_history = [pair[1] for pair in agent.game_history]
            decisions.append(agent_decide(agent, peer_history, decisions_rng))
        world = apply_decisions(
            WorldState(agents=updated, intensity_scale=world.intensity_scale),
            decisions,
            config.matrix,
            config.mitigation,
            config.recovery_cost,
        )
        messages = [
            MessageKind.STATUS_REPORT,
            MessageKind.EVENT_REPORT,
            MessageKind.AGENT_PROCESSING,
            MessageKind.DECISION_MSG,
        ]
        if any(d.played for d in decisions):
            messages.append(MessageKind.FLOW_RULE)
        records.append(
            SlotRecord(
                slot=slot,
                threat_p=effective_p,
                events=batches,
                statuses=tuple(a.status for a in world.agents),
                decisions=tuple(decisions),
                payoffs=world.last_payoffs,
                resources=tuple(a.resources_spent for a in world.agents),
                messages=tuple(messages),
            )
        )
    return CpsTrace(config=config, seed=config.seed, slots=tuple(records))
