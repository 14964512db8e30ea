"""End-to-end session replay: measurement, policy driving and study metrics.

A replay is two passes over an immutable recording: measurement (attention
grids, effort windows, joint metrics, resting baselines) and a tick-by-tick
policy drive that consumes the measured series in timestamp order. Replays
are bit-deterministic for a fixed recording and configuration.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import effort, gaze
from .config import EngineConfig
from .forecast import OracleForecaster, build_features
from .policy import (
    CONDITION_CONTROL,
    METRICS,
    Baseline,
    FeedbackEvent,
    PolicyState,
    apply_control,
    compute_baseline,
    proactive_step,
    reactive_step,
    state_from_raws,
)
from .scenario_table import load_table
from .streams import CodeEditEvent, SessionRecording
from .streams import windows as split_windows


class ReplayError(ValueError):
    pass


@dataclass
class Measurements:
    """Per-tick and per-window metric series for one recording."""

    n_ticks: int
    jva: np.ndarray                    # value per tick
    me: dict[str, np.ndarray]          # participant -> value per 10 s window
    me_bins: dict[str, np.ndarray]     # discretized per-session
    jme: np.ndarray                    # value per tick
    baselines: dict[str, Baseline]
    rest_ticks: list[int]
    task_ticks: list[int]

    def raws_at(self, tick: int) -> dict[str, float]:
        w = self._me_index(tick)
        return {
            "JVA": float(self.jva[tick]),
            "JME": float(self.jme[tick]),
            "ME1": float(self.me["P1"][w]),
            "ME2": float(self.me["P2"][w]),
        }

    def metric_table(self) -> list[tuple[float, float, float, float]]:
        rows = []
        for tick in range(self.n_ticks):
            r = self.raws_at(tick)
            rows.append((r["JVA"], r["JME"], r["ME1"], r["ME2"]))
        return rows

    def _me_index(self, tick: int) -> int:
        n_me = len(self.me["P1"])
        return min(3 * tick + 2, n_me - 1)


def measure_session(rec: SessionRecording, config: EngineConfig) -> Measurements:
    """Compute JVA/ME/JME series and resting baselines for a recording."""
    tick_ms = config.jva_window_ms
    me_ms = config.jme_window_ms
    duration = rec.duration_ms()
    if duration <= 0:
        raise ReplayError("empty recording")
    n_ticks = (duration + tick_ms - 1) // tick_ms
    end_ms = n_ticks * tick_ms

    layout = rec.header.layout
    grids = {}
    for participant in ("P1", "P2"):
        stream = rec.gaze_for(participant)
        grids[participant] = [
            gaze.accumulate(members, layout, rec.scroll, window=win,
                            participant=participant, cols=config.cols)
            for win, members in split_windows(stream, tick_ms, tick_ms, end_ms=end_ms)
        ]
    jva = np.array([gaze.jva_cosine(g1, g2).value
                    for g1, g2 in zip(grids["P1"], grids["P2"])])

    n_me = max(1, (duration + me_ms - 1) // me_ms)
    me = {}
    for participant in ("P1", "P2"):
        stream = rec.pupil_for(participant)
        values = []
        for win, members in split_windows(stream, me_ms, me_ms, end_ms=n_me * me_ms):
            values.append(effort.ipa_for_window(members, win.start, win.end,
                                                rec.header.pupil_rate_hz))
        me[participant] = np.asarray(values)
    me_bins = {p: effort.discretize_me(v) for p, v in me.items()}

    trailing = config.jme_trailing
    jme = np.empty(n_ticks)
    for tick in range(n_ticks):
        w1 = min(3 * tick + 3, n_me)
        w0 = max(0, w1 - trailing)
        if config.jme_mode == "crqa":
            jme[tick] = effort.jme_crqa(me_bins["P1"][w0:w1], me_bins["P2"][w0:w1])
        else:
            jme[tick] = effort.jme_cosine(me["P1"][w0:w1], me["P2"][w0:w1])

    t0, t1 = rec.header.baseline
    rest_ticks = [k for k in range(n_ticks)
                  if k * tick_ms >= t0 and (k + 1) * tick_ms <= t1]
    task_ticks = [k for k in range(n_ticks) if k * tick_ms >= t1]
    rest_me_windows = [w for w in range(n_me)
                       if w * me_ms >= t0 and (w + 1) * me_ms <= t1]
    if len(rest_ticks) < 2 or len(rest_me_windows) < 2:
        raise ReplayError("resting segment too short for baselines")

    baselines = {
        "JVA": compute_baseline("JVA", jva[rest_ticks]),
        "JME": compute_baseline("JME", jme[rest_ticks]),
        "ME1": compute_baseline("ME1", me["P1"][rest_me_windows]),
        "ME2": compute_baseline("ME2", me["P2"][rest_me_windows]),
    }
    return Measurements(n_ticks=n_ticks, jva=jva, me=me, me_bins=me_bins,
                        jme=jme, baselines=baselines,
                        rest_ticks=rest_ticks, task_ticks=task_ticks)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class SessionMetrics:
    debugging_success: int
    time_on_task_s: float
    uptake_per_feedback: list[int]
    uptake_total: int
    action_counts: dict[str, int]
    events_emitted: int
    events_suppressed: int

    def to_dict(self) -> dict:
        return {
            "debugging_success": self.debugging_success,
            "time_on_task_s": self.time_on_task_s,
            "uptake_per_feedback": self.uptake_per_feedback,
            "uptake_total": self.uptake_total,
            "action_counts": self.action_counts,
            "events_emitted": self.events_emitted,
            "events_suppressed": self.events_suppressed,
        }


def feedback_uptake(events: list[FeedbackEvent],
                    edits: list[CodeEditEvent]) -> list[int]:
    """Edits attributed to each unsuppressed feedback event: the count in
    [t_i, t_{i+1}), the last interval extending to the session end. Edits
    before the first feedback are unattributed."""
    starts = sorted(e.t for e in events if not e.suppressed)
    if not starts:
        return []
    uptake = [0] * len(starts)
    for edit in edits:
        if edit.t < starts[0]:
            continue
        # rightmost feedback at or before the edit
        lo, hi = 0, len(starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if starts[mid] <= edit.t:
                lo = mid
            else:
                hi = mid - 1
        uptake[lo] += 1
    return uptake


def summarize(rec: SessionRecording, events: list[FeedbackEvent]) -> SessionMetrics:
    uptake = feedback_uptake(events, rec.edits)
    counts = {a: 0 for a in ("A1", "A2", "A3", "A4", "A5")}
    suppressed = 0
    for ev in events:
        if ev.suppressed:
            suppressed += 1
            continue
        for action in ev.actions:
            counts[action] += 1
    return SessionMetrics(
        debugging_success=len(rec.bugs) + 1,
        time_on_task_s=rec.duration_ms() / 1000.0,
        uptake_per_feedback=uptake,
        uptake_total=sum(uptake),
        action_counts=counts,
        events_emitted=sum(1 for e in events if not e.suppressed),
        events_suppressed=suppressed,
    )


# ---------------------------------------------------------------------------
# Replay drivers
# ---------------------------------------------------------------------------

@dataclass
class ReplayResult:
    events: list[FeedbackEvent]
    metrics: SessionMetrics
    measurements: Measurements
    policy_state: PolicyState = field(repr=False, default=None)


def replay(rec: SessionRecording, config: EngineConfig,
           forecaster=None) -> ReplayResult:
    """Drive the feedback policy over a recording tick by tick."""
    table = load_table()
    meas = measure_session(rec, config)
    ps = PolicyState()
    controls = sorted(rec.controls, key=lambda c: c.t)
    ci = 0
    horizon_ticks = config.horizon_ms // config.jva_window_ms

    if config.mode == "proactive":
        if forecaster is None:
            raise ReplayError("proactive mode needs a fitted forecaster")
        if isinstance(forecaster, OracleForecaster):
            forecaster.bind(meas.metric_table(), horizon_ticks)

    history: list[tuple[float, float, float, float]] = []
    baseline_means = tuple(meas.baselines[m].mean for m in METRICS)
    events: list[FeedbackEvent] = []
    for tick in range(meas.n_ticks):
        raws = meas.raws_at(tick)
        history.append((raws["JVA"], raws["JME"], raws["ME1"], raws["ME2"]))
        if tick not in meas.task_ticks:
            continue
        eval_t = (tick + 1) * config.jva_window_ms
        while ci < len(controls) and controls[ci].t <= eval_t:
            apply_control(controls[ci], ps)
            ci += 1
        if config.condition == CONDITION_CONTROL:
            continue
        if config.mode == "reactive":
            state = state_from_raws(tick, eval_t, raws, meas.baselines, config.sd_k)
            event = reactive_step(table, state, ps, config.condition,
                                  config.persistence_ticks, config.cooldown_ticks)
        else:
            features = build_features(history, config.forecast_lags, baseline_means)
            pred = forecaster.predict(features)
            if pred is None or len(pred) != 4 or not np.all(np.isfinite(pred)):
                raise ReplayError(f"forecaster returned no usable forecast at tick {tick}")
            forecast_raws = {m: float(pred[i]) for i, m in enumerate(METRICS)}
            f_state = state_from_raws(tick, eval_t, forecast_raws,
                                      meas.baselines, config.sd_k)
            event = proactive_step(table, f_state, ps, config.condition,
                                   config.persistence_ticks, config.cooldown_ticks)
        if event is not None:
            events.append(event)
    while ci < len(controls):
        apply_control(controls[ci], ps)
        ci += 1
    return ReplayResult(events=events, metrics=summarize(rec, events),
                        measurements=meas, policy_state=ps)


# ---------------------------------------------------------------------------
# Output writers (canonical, byte-stable)
# ---------------------------------------------------------------------------

def event_to_obj(ev: FeedbackEvent) -> dict:
    return {
        "t": ev.t,
        "actions": sorted(ev.actions),
        "scenario": ev.scenario_tag(),
        "source": ev.source,
        "suppressed": ev.suppressed,
    }


def write_event_log(events: list[FeedbackEvent], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(event_to_obj(ev), separators=(",", ":")) + "\n")
    os.replace(tmp, path)


METRICS_CSV_HEADER = ("session,condition,mode,debugging_success,time_on_task_s,"
                      "uptake_total,events_emitted,events_suppressed,"
                      "a1,a2,a3,a4,a5")


def metrics_csv_row(name: str, config: EngineConfig, m: SessionMetrics) -> str:
    c = m.action_counts
    return (f"{name},{config.condition},{config.mode},{m.debugging_success},"
            f"{m.time_on_task_s:.3f},{m.uptake_total},{m.events_emitted},"
            f"{m.events_suppressed},{c['A1']},{c['A2']},{c['A3']},{c['A4']},{c['A5']}")


def write_metrics_csv(rows: list[str], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Closed-loop adaptive simulation (wiring checks)
# ---------------------------------------------------------------------------

def run_adaptive_session(condition: str, seed: int, task_ticks: int = 16,
                         config: EngineConfig | None = None):
    """Generate-and-regulate loop: each tick's streams depend on the latent
    alignment, which delivered feedback raises. Returns (metrics, events).

    The built-in behavior model makes delivered feedback improve the pair's
    synthetic alignment; this is a wiring check for condition plumbing, not
    evidence about humans.
    """
    from . import generator as gen
    from .streams import BugEvent, SessionHeader

    if config is None:
        config = EngineConfig(mode="reactive", condition=condition)
    rest_ticks = 3
    rng = np.random.default_rng(seed)
    band = gen.BAND_CYCLES["mid"]
    p1 = gen._participant_plan(band, rest_ticks, alternate=False)
    p2 = gen._participant_plan(band, rest_ticks, alternate=True)
    plans = {
        ("H", "H", "AVG", "AVG"): gen._solve_jme_high("AVG", "AVG", p1, p2),
        ("AVG", "AVG", "AVG", "AVG"): gen._solve_jme_avg("AVG", "AVG", p1, p2, True),
        ("L", "L", "H", "H"): gen._solve_jme_low("H", "H", p1, p2),
    }
    tick_ms = config.jva_window_ms
    me_ms = config.jme_window_ms
    header = SessionHeader(layout=gen.DEFAULT_LAYOUT,
                           pupil_rate_hz=gen.PUPIL_RATE_HZ,
                           gaze_rate_hz=gen.GAZE_RATE_HZ,
                           baseline=(0, rest_ticks * tick_ms))
    rec = SessionRecording(header=header)
    for tick in range(rest_ticks):
        t0 = tick * tick_ms
        gen.emit_gaze_window(rec, rng, t0, gen.JVA_Q_REST_CYCLE[tick % 3])
        k1s = gen._rest_tick_counts(band, tick, alternate=False)
        k2s = gen._rest_tick_counts(band, tick, alternate=True)
        gen._emit_effort_tick(rec, t0, tuple(zip(k1s, k2s)))
    calib_t0 = rest_ticks * tick_ms
    gen.emit_gaze_window(rec, rng, calib_t0, gen.JVA_Q_AVG_CYCLE[0])
    gen._emit_effort_tick(rec, calib_t0, ((0, 0), (gen.CALIB_K, gen.CALIB_K), (0, 0)))

    model = gen.BehaviorModel()
    table = load_table()
    ps = PolicyState()
    events: list[FeedbackEvent] = []
    bug_counter = 0
    first_task_tick = rest_ticks + 1

    # rest + calibration fix the baselines and pin the effort bin range
    meas = measure_session(rec, config)
    baselines = meas.baselines
    me_series = {p: list(meas.me[p]) for p in ("P1", "P2")}

    for step_i in range(task_ticks):
        tick = first_task_tick + step_i
        t0 = tick * tick_ms
        target = model.regime()
        counts = plans[target].counts_for(step_i)
        q = (gen.JVA_Q_HIGH if target[0] == "H"
             else gen.JVA_Q_LOW if target[0] == "L"
             else gen.JVA_Q_AVG_CYCLE[tick % 3])
        gen.emit_gaze_window(rec, rng, t0, q)
        gen._emit_effort_tick(rec, t0, counts)

        # measure the fresh tick with the same primitives as offline replay
        grids = {
            p: gaze.accumulate([s for s in rec.gaze_for(p) if s.t >= t0],
                               rec.header.layout, rec.scroll, cols=config.cols)
            for p in ("P1", "P2")}
        jva_val = gaze.cosine_similarity(grids["P1"].counts, grids["P2"].counts)
        for w in range(len(counts)):
            ws = t0 + w * me_ms
            for p in ("P1", "P2"):
                samples = [s for s in rec.pupil_for(p) if ws <= s.t < ws + me_ms]
                me_series[p].append(effort.ipa_for_window(
                    samples, ws, ws + me_ms, rec.header.pupil_rate_hz))
        bins = {p: effort.discretize_me(me_series[p]) for p in ("P1", "P2")}
        w1 = len(me_series["P1"])
        w0 = w1 - config.jme_trailing
        jme_val = effort.jme_crqa(bins["P1"][w0:w1], bins["P2"][w0:w1])
        raws = {"JVA": jva_val, "JME": jme_val,
                "ME1": me_series["P1"][-1], "ME2": me_series["P2"][-1]}
        state = state_from_raws(tick, t0 + tick_ms, raws, baselines, config.sd_k)
        event = None
        if condition != CONDITION_CONTROL:
            event = reactive_step(table, state, ps, condition,
                                  config.persistence_ticks, config.cooldown_ticks)
        if event is not None:
            events.append(event)
            if not event.suppressed:
                model.apply_feedback(event.actions)
        fixed = model.advance_tick(rng)
        for _ in range(fixed):
            bug_counter += 1
            rec.bugs.append(BugEvent(t0 + tick_ms - 1, f"bug{bug_counter}"))
        n_edits = 1 + int(3 * model.alignment)
        for i in range(n_edits):
            rec.edits.append(CodeEditEvent(t0 + 2000 * (i + 1),
                                           "P1" if i % 2 == 0 else "P2", 1))
    metrics = summarize(rec, events)
    return metrics, events
