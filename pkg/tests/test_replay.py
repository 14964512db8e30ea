from __future__ import annotations

import numpy as np
import pytest

from ssrl_engine.config import EngineConfig
from ssrl_engine.forecast import OracleForecaster, PersistenceForecaster
from ssrl_engine.generator import generate_session, single_state_script
from ssrl_engine.policy import FeedbackEvent
from ssrl_engine.replay import (
    ReplayError,
    feedback_uptake,
    measure_session,
    replay,
    run_adaptive_session,
    summarize,
    write_event_log,
)
from ssrl_engine.streams import (
    BugEvent,
    CodeEditEvent,
    ControlEvent,
    DocumentLayout,
    SessionHeader,
    SessionRecording,
)


def small_header(baseline=(0, 60_000)):
    return SessionHeader(
        layout=DocumentLayout(100.0, 20.0, 120, 1920.0, 1080.0),
        pupil_rate_hz=200.0, gaze_rate_hz=50.0, baseline=baseline)


def fb(t, actions=("A3",), suppressed=False):
    return FeedbackEvent(t=t, actions=frozenset(actions), scenario_id=22,
                         fallback=False, source="reactive", suppressed=suppressed)


class TestFeedbackUptake:
    def test_no_feedback_gives_empty_list(self):
        edits = [CodeEditEvent(10, "P1", 1)]
        assert feedback_uptake([], edits) == []

    def test_single_interval(self):
        events = [fb(0)]
        edits = [CodeEditEvent(t, "P1", 1) for t in (5, 10, 20, 40, 80)]
        assert feedback_uptake(events, edits) == [5]

    def test_interval_partition_by_hand(self):
        events = [fb(100), fb(200)]
        edits = [CodeEditEvent(150, "P1", 1), CodeEditEvent(150, "P2", 1),
                 CodeEditEvent(250, "P1", 1)]
        assert feedback_uptake(events, edits) == [2, 1]

    def test_edits_before_first_feedback_unattributed(self):
        events = [fb(100)]
        edits = [CodeEditEvent(50, "P1", 1), CodeEditEvent(150, "P1", 1)]
        assert feedback_uptake(events, edits) == [1]

    def test_suppressed_events_excluded(self):
        events = [fb(100, suppressed=True), fb(200)]
        edits = [CodeEditEvent(150, "P1", 1), CodeEditEvent(250, "P1", 1)]
        assert feedback_uptake(events, edits) == [1]

    def test_partition_property_on_random_logs(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n_events = int(rng.integers(1, 8))
            times = np.sort(rng.choice(np.arange(100, 10_000, 7),
                                       size=n_events, replace=False))
            events = [fb(int(t)) for t in times]
            edits = [CodeEditEvent(int(t), "P1", 1)
                     for t in np.sort(rng.integers(0, 11_000, size=rng.integers(0, 60)))]
            uptake = feedback_uptake(events, edits)
            attributable = sum(1 for e in edits if e.t >= times[0])
            assert sum(uptake) == attributable
            assert len(uptake) == n_events


class TestSummarize:
    def test_metrics_from_constructed_log(self):
        rec = SessionRecording(header=small_header())
        rec.bugs = [BugEvent(1000, "b1"), BugEvent(2000, "b2"), BugEvent(3000, "b3")]
        rec.edits = [CodeEditEvent(600_000, "P1", 2)]
        m = summarize(rec, [fb(1000), fb(2000, suppressed=True)])
        assert m.debugging_success == 4
        assert m.time_on_task_s == 600.0
        assert m.events_emitted == 1
        assert m.events_suppressed == 1
        assert m.action_counts["A3"] == 1


class TestMeasureSession:
    def test_series_shapes_and_baselines(self):
        rec = generate_session(single_state_script(("L", "L", "H", "H"), ticks=4),
                               seed=1)
        meas = measure_session(rec, EngineConfig())
        assert meas.n_ticks == 8  # 3 rest + calib + 4 task
        assert len(meas.jva) == 8
        assert len(meas.me["P1"]) == 24
        assert set(meas.baselines) == {"JVA", "JME", "ME1", "ME2"}
        assert meas.rest_ticks == [0, 1, 2]
        assert meas.task_ticks == [3, 4, 5, 6, 7]

    def test_empty_recording_rejected(self):
        rec = SessionRecording(header=small_header())
        with pytest.raises(ReplayError):
            measure_session(rec, EngineConfig())

    def test_short_rest_rejected(self):
        rec = generate_session(single_state_script(("L", "L", "L", "L"), ticks=2),
                               seed=1)
        object.__setattr__(rec.header, "baseline", (0, 20_000))
        with pytest.raises(ReplayError):
            measure_session(rec, EngineConfig())


class TestReplay:
    @staticmethod
    def session(target=("L", "L", "H", "H"), ticks=5, seed=2, **kw):
        return generate_session(single_state_script(target, ticks=ticks, **kw),
                                seed=seed)

    def test_control_condition_emits_nothing_but_measures(self):
        rec = self.session()
        out = replay(rec, EngineConfig(condition="control"))
        assert out.metrics.events_emitted == 0
        assert out.metrics.events_suppressed == 0
        assert out.metrics.time_on_task_s > 0
        assert out.measurements.n_ticks > 0

    def test_combined_reactive_emits_filtered_actions(self):
        rec = self.session()
        out = replay(rec, EngineConfig(condition="combined"))
        assert out.metrics.events_emitted > 0
        for ev in out.events:
            assert ev.actions <= {"A3", "A4", "A5"}

    def test_debugging_success_counts_bugs_plus_one(self):
        rec = self.session(bug_fix_times=(10_000, 40_000, 70_000))
        out = replay(rec, EngineConfig(condition="control"))
        assert out.metrics.debugging_success == 4

    def test_replay_is_deterministic(self):
        rec = self.session()
        cfg = EngineConfig(condition="combined")
        a = replay(rec, cfg)
        b = replay(rec, cfg)
        assert [vars(x) for x in a.events] == [vars(y) for y in b.events]
        assert a.metrics.to_dict() == b.metrics.to_dict()

    def test_pause_control_suppresses_two_minutes(self):
        rec = self.session(ticks=8)
        # pause right as the task starts: ticks ending within 120 s suppressed
        task_start = 4 * 30_000
        rec.controls.append(ControlEvent(task_start, "pause"))
        out = replay(rec, EngineConfig(condition="combined"))
        suppressed = [e for e in out.events if e.suppressed]
        delivered = [e for e in out.events if not e.suppressed]
        assert suppressed and delivered
        assert all(e.t < task_start + 120_000 for e in suppressed)
        assert all(e.t >= task_start + 120_000 for e in delivered)

    def test_cancel_is_absorbing(self):
        rec = self.session(ticks=6)
        rec.controls.append(ControlEvent(0, "cancel"))
        out = replay(rec, EngineConfig(condition="combined"))
        assert out.metrics.events_emitted == 0
        assert out.metrics.events_suppressed > 0

    def test_ignore_marks_latest_event(self):
        rec = self.session(ticks=6)
        # ignore shortly after the first possible event
        rec.controls.append(ControlEvent(5 * 30_000 + 1000, "ignore"))
        out = replay(rec, EngineConfig(condition="combined"))
        assert any(e.suppressed for e in out.events)

    def test_proactive_mode_requires_forecaster(self):
        rec = self.session()
        with pytest.raises(ReplayError):
            replay(rec, EngineConfig(mode="proactive", condition="proactive-full"))

    def test_proactive_emits_do_nothing_on_desired_state(self):
        rec = self.session(target=("H", "H", "AVG", "AVG"), ticks=5)
        cfg = EngineConfig(mode="proactive", condition="proactive-full")
        out = replay(rec, cfg, forecaster=PersistenceForecaster(k=cfg.forecast_lags))
        a1_events = [e for e in out.events if e.actions == frozenset({"A1"})]
        assert len(a1_events) >= 3

    def test_oracle_forecaster_binds_to_session(self):
        rec = self.session(ticks=5)
        cfg = EngineConfig(mode="proactive", condition="proactive-full",
                           forecaster="oracle")
        out = replay(rec, cfg, forecaster=OracleForecaster())
        assert out.events  # proactive always produces events on task ticks

    def test_event_log_round_trip(self, tmp_path):
        import json
        rec = self.session()
        out = replay(rec, EngineConfig(condition="combined"))
        path = tmp_path / "events.jsonl"
        write_event_log(out.events, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == len(out.events)
        assert all(set(l) == {"t", "actions", "scenario", "source", "suppressed"}
                   for l in lines)


class TestAdaptiveSession:
    def test_feedback_conditions_outperform_control(self):
        control, _ = run_adaptive_session("control", seed=0, task_ticks=16)
        combined, ev = run_adaptive_session("combined", seed=0, task_ticks=16)
        assert combined.debugging_success >= control.debugging_success
        assert any(not e.suppressed for e in ev)

    def test_jme_only_delivers_hints_only(self):
        m, events = run_adaptive_session("jme", seed=1, task_ticks=16)
        delivered = [e for e in events if not e.suppressed]
        assert delivered
        assert all(e.actions == frozenset({"A5"}) for e in delivered)
