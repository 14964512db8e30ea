"""Baseline discretization and the reactive/proactive feedback state machines.

Metric values become H/AVG/L levels against resting-baseline bands
(mean +/- sd_k * sd, band edges inclusive). The reactive machine fires when a
monitored metric leaves its band; the proactive machine evaluates a
forecasted state every tick and emits an explicit do-nothing action when the
forecast is in the desired state. Conditions gate which feedback tools can
be delivered, never which metrics are measured.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario_table import ScenarioMatch, ScenarioTable
from .streams import PAUSE_MS, ControlEvent

METRICS = ("JVA", "JME", "ME1", "ME2")

LEVEL_HIGH = "H"
LEVEL_AVG = "AVG"
LEVEL_LOW = "L"

ACTION_DO_NOTHING = "A1"
ACTION_COPILOT = "A2"
ACTION_GAZE_AWARENESS = "A3"
ACTION_DIALOG_PROMPT = "A4"
ACTION_TASK_HINT = "A5"
ALL_ACTIONS = frozenset({"A1", "A2", "A3", "A4", "A5"})

CONDITION_CONTROL = "control"
CONDITION_JVA_ONLY = "jva"
CONDITION_JME_ONLY = "jme"
CONDITION_COMBINED = "combined"
CONDITION_PROACTIVE_FULL = "proactive-full"
CONDITIONS = (CONDITION_CONTROL, CONDITION_JVA_ONLY, CONDITION_JME_ONLY,
              CONDITION_COMBINED, CONDITION_PROACTIVE_FULL)

# Tools each condition may deliver. Conditions restrict tools, not triggers.
CONDITION_TOOLS: dict[str, frozenset[str]] = {
    CONDITION_CONTROL: frozenset(),
    CONDITION_JVA_ONLY: frozenset({"A3", "A4"}),
    CONDITION_JME_ONLY: frozenset({"A5"}),
    CONDITION_COMBINED: frozenset({"A3", "A4", "A5"}),
    CONDITION_PROACTIVE_FULL: ALL_ACTIONS,
}

DEFAULT_SD_K = 2.0
DEFAULT_PERSISTENCE_TICKS = 3
DEFAULT_COOLDOWN_TICKS = 1

SOURCE_REACTIVE = "reactive"
SOURCE_PROACTIVE = "proactive"


class InsufficientBaselineError(ValueError):
    pass


@dataclass(frozen=True)
class Baseline:
    metric: str
    mean: float
    sd: float

    def __post_init__(self):
        if self.sd < 0:
            raise ValueError("sd must be >= 0")


def compute_baseline(metric: str, resting_values) -> Baseline:
    """Population mean/sd of a metric over the resting windows."""
    values = np.asarray(list(resting_values), dtype=np.float64)
    if values.size < 2:
        raise InsufficientBaselineError(
            f"{metric}: need >= 2 resting values, got {values.size}")
    return Baseline(metric=metric, mean=float(values.mean()),
                    sd=float(values.std()))


def discretize(value: float, baseline: Baseline, sd_k: float = DEFAULT_SD_K) -> str:
    """H above mean + sd_k*sd, L below mean - sd_k*sd, AVG inside (inclusive).

    A zero-sd baseline degenerates to a point band: H strictly above the
    mean, L strictly below.
    """
    upper = baseline.mean + sd_k * baseline.sd
    lower = baseline.mean - sd_k * baseline.sd
    if value > upper:
        return LEVEL_HIGH
    if value < lower:
        return LEVEL_LOW
    return LEVEL_AVG


@dataclass(frozen=True)
class CollaborationState:
    tick: int
    t: int
    jva: str
    jme: str
    me1: str
    me2: str
    raw_jva: float = float("nan")
    raw_jme: float = float("nan")
    raw_me1: float = float("nan")
    raw_me2: float = float("nan")

    def level_tuple(self) -> tuple[str, str, str, str]:
        return (self.jva, self.jme, self.me1, self.me2)


def state_from_raws(tick: int, t: int, raws: dict[str, float],
                    baselines: dict[str, Baseline],
                    sd_k: float = DEFAULT_SD_K) -> CollaborationState:
    levels = {m: discretize(raws[m], baselines[m], sd_k) for m in METRICS}
    return CollaborationState(
        tick=tick, t=t,
        jva=levels["JVA"], jme=levels["JME"], me1=levels["ME1"], me2=levels["ME2"],
        raw_jva=raws["JVA"], raw_jme=raws["JME"],
        raw_me1=raws["ME1"], raw_me2=raws["ME2"])


@dataclass
class FeedbackEvent:
    t: int
    actions: frozenset[str]
    scenario_id: int
    fallback: bool
    source: str
    suppressed: bool = False

    def scenario_tag(self):
        return f"~{self.scenario_id}" if self.fallback else self.scenario_id


@dataclass
class PolicyState:
    """Mutable per-session state of the feedback machine."""

    pause_until: int | None = None
    cancelled: bool = False
    streak_scenario: int | None = None
    streak_count: int = 0
    streak_delivered: bool = False
    streak_undeliverable: bool = False
    last_event_tick: int | None = None
    events: list[FeedbackEvent] = field(default_factory=list)

    def suppressed_now(self, t: int) -> bool:
        return self.cancelled or (self.pause_until is not None and t < self.pause_until)


def classify_scenario(table: ScenarioTable, state: CollaborationState) -> ScenarioMatch:
    return table.classify(*state.level_tuple())


def _update_streak(ps: PolicyState, scenario_id: int) -> None:
    if ps.streak_scenario == scenario_id:
        ps.streak_count += 1
    else:
        ps.streak_scenario = scenario_id
        ps.streak_count = 1
        ps.streak_delivered = False
        ps.streak_undeliverable = False


def select_actions(table: ScenarioTable, scenario_id: int, ps: PolicyState,
                   persistence_ticks: int = DEFAULT_PERSISTENCE_TICKS) -> frozenset[str]:
    """The scenario's checked actions; starred ones only once the scenario has
    persisted for `persistence_ticks` ticks with the base scaffolds already
    tried (delivered, or impossible to deliver under the condition)."""
    escalate = (ps.streak_scenario == scenario_id
                and ps.streak_count >= persistence_ticks
                and (ps.streak_delivered or ps.streak_undeliverable))
    return table.escalated_actions(scenario_id) if escalate else table.base_actions(scenario_id)


def filter_by_condition(actions: frozenset[str], condition: str) -> frozenset[str]:
    return frozenset(actions) & CONDITION_TOOLS[condition]


def reactive_trigger(state: CollaborationState, condition: str) -> bool:
    """True when a monitored metric sits outside its +/- sd_k band."""
    if condition == CONDITION_CONTROL:
        return False
    return any(level != LEVEL_AVG for level in state.level_tuple())


def _emit(ps: PolicyState, event: FeedbackEvent, tick: int,
          cooldown_ticks: int) -> FeedbackEvent | None:
    if event.suppressed:
        ps.events.append(event)
        return event
    if (ps.last_event_tick is not None
            and tick - ps.last_event_tick < cooldown_ticks):
        return None
    ps.last_event_tick = tick
    ps.streak_delivered = True
    ps.events.append(event)
    return event


def reactive_step(table: ScenarioTable, state: CollaborationState,
                  ps: PolicyState, condition: str,
                  persistence_ticks: int = DEFAULT_PERSISTENCE_TICKS,
                  cooldown_ticks: int = DEFAULT_COOLDOWN_TICKS) -> FeedbackEvent | None:
    """One reactive evaluation tick.

    Fires only on a deviation; the event's actions are the classified
    scenario's set intersected with the condition's tools, never A1.
    Returns None when nothing is deliverable, a suppressed event while
    paused or cancelled.
    """
    match = classify_scenario(table, state)
    _update_streak(ps, match.scenario_id)
    if not reactive_trigger(state, condition):
        return None
    base_deliverable = (filter_by_condition(table.base_actions(match.scenario_id),
                                            condition) - {ACTION_DO_NOTHING})
    if not base_deliverable:
        ps.streak_undeliverable = True
    actions = select_actions(table, match.scenario_id, ps, persistence_ticks)
    deliverable = filter_by_condition(actions, condition) - {ACTION_DO_NOTHING}
    if not deliverable:
        return None
    event = FeedbackEvent(t=state.t, actions=deliverable,
                          scenario_id=match.scenario_id, fallback=match.fallback,
                          source=SOURCE_REACTIVE,
                          suppressed=ps.suppressed_now(state.t))
    return _emit(ps, event, state.tick, cooldown_ticks)


def proactive_step(table: ScenarioTable, forecast_state: CollaborationState,
                   ps: PolicyState, condition: str = CONDITION_PROACTIVE_FULL,
                   persistence_ticks: int = DEFAULT_PERSISTENCE_TICKS,
                   cooldown_ticks: int = DEFAULT_COOLDOWN_TICKS) -> FeedbackEvent | None:
    """One proactive evaluation tick on a forecasted state.

    Always produces an event under the full-tool condition: an in-band
    forecast yields the explicit do-nothing action A1.
    """
    match = classify_scenario(table, forecast_state)
    _update_streak(ps, match.scenario_id)
    if not filter_by_condition(table.base_actions(match.scenario_id), condition):
        ps.streak_undeliverable = True
    actions = select_actions(table, match.scenario_id, ps, persistence_ticks)
    deliverable = filter_by_condition(actions, condition)
    if not deliverable:
        return None
    event = FeedbackEvent(t=forecast_state.t, actions=deliverable,
                          scenario_id=match.scenario_id, fallback=match.fallback,
                          source=SOURCE_PROACTIVE,
                          suppressed=ps.suppressed_now(forecast_state.t))
    return _emit(ps, event, forecast_state.tick, cooldown_ticks)


def apply_control(event: ControlEvent, ps: PolicyState) -> PolicyState:
    """pause suppresses delivery for two minutes, cancel is absorbing,
    ignore retro-suppresses the most recent event."""
    if event.kind == "pause":
        ps.pause_until = event.t + PAUSE_MS
    elif event.kind == "cancel":
        ps.cancelled = True
    elif event.kind == "ignore":
        # Mutates in place so every log holding this event sees the flip.
        if ps.events:
            ps.events[-1].suppressed = True
    else:
        raise ValueError(f"unknown control kind {event.kind!r}")
    return ps
