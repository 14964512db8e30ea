from __future__ import annotations

import random

import pytest

from ssrl_engine.streams import (
    BugEvent,
    CodeEditEvent,
    ControlEvent,
    DocumentLayout,
    GazeSample,
    PupilSample,
    ScrollEvent,
    SessionFormatError,
    SessionHeader,
    SessionRecording,
    Window,
    load_session,
    save_session,
    serialize_session,
    windows,
)

HEADER_LINE = (
    '{"layout":{"doc_top_px":100.0,"line_height_px":20.0,"total_lines":120,'
    '"screen_w_px":1920.0,"screen_h_px":1080.0},'
    '"pupil_rate_hz":200.0,"gaze_rate_hz":50.0,"baseline":[0,60000]}'
)


def make_header() -> SessionHeader:
    layout = DocumentLayout(doc_top_px=100.0, line_height_px=20.0, total_lines=120,
                            screen_w_px=1920.0, screen_h_px=1080.0)
    return SessionHeader(layout=layout, pupil_rate_hz=200.0, gaze_rate_hz=50.0,
                         baseline=(0, 60000))


class TestLoadSession:
    def test_empty_stream_file(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(HEADER_LINE + "\n")
        rec = load_session(path)
        assert rec.header.layout.total_lines == 120
        assert rec.duration_ms() == 0
        assert not rec.gaze and not rec.pupil and not rec.bugs

    def test_single_gaze_line(self, tmp_path):
        path = tmp_path / "s.jsonl"
        line = '{"type":"gaze","t":0,"p":"P1","x":0.5,"y":0.5,"valid":true}'
        path.write_text(HEADER_LINE + "\n" + line + "\n")
        rec = load_session(path)
        assert len(rec.gaze) == 1
        s = rec.gaze[0]
        assert (s.t, s.participant, s.x_norm, s.y_norm, s.valid) == (0, "P1", 0.5, 0.5, True)

    def test_round_trip_is_byte_identical(self, tmp_path):
        rec = SessionRecording(header=make_header())
        rec.gaze.append(GazeSample(0, "P1", 0.25, 0.75, True))
        rec.gaze.append(GazeSample(0, "P2", None, None, False))
        rec.pupil.append(PupilSample(0, "P1", 3.75))
        rec.scroll.append(ScrollEvent(5, 10))
        rec.edits.append(CodeEditEvent(7, "P2", 3))
        rec.bugs.append(BugEvent(9, "b1"))
        rec.controls.append(ControlEvent(11, "pause"))
        path = tmp_path / "s.jsonl"
        save_session(rec, path)
        first = path.read_bytes()
        reloaded = load_session(path)
        assert serialize_session(reloaded).encode() == first
        assert reloaded.gaze == rec.gaze
        assert reloaded.controls == rec.controls

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(HEADER_LINE + "\n{not json\n")
        with pytest.raises(SessionFormatError) as err:
            load_session(path)
        assert err.value.line_no == 2

    def test_out_of_order_timestamps(self, tmp_path):
        path = tmp_path / "s.jsonl"
        lines = [
            HEADER_LINE,
            '{"type":"pupil","t":10,"p":"P1","d":3.0}',
            '{"type":"pupil","t":5,"p":"P1","d":3.0}',
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SessionFormatError, match="out-of-order"):
            load_session(path)

    def test_interleaved_participant_streams_are_independent(self, tmp_path):
        # P2 may lag P1; ordering is per participant stream.
        path = tmp_path / "s.jsonl"
        lines = [
            HEADER_LINE,
            '{"type":"pupil","t":10,"p":"P1","d":3.0}',
            '{"type":"pupil","t":5,"p":"P2","d":3.0}',
        ]
        path.write_text("\n".join(lines) + "\n")
        rec = load_session(path)
        assert len(rec.pupil) == 2

    def test_missing_header(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"type":"scroll","t":0,"line":0}\n')
        with pytest.raises(SessionFormatError, match="missing header"):
            load_session(path)

    def test_bug_fixed_twice_rejected(self, tmp_path):
        path = tmp_path / "s.jsonl"
        lines = [
            HEADER_LINE,
            '{"type":"bug","t":10,"id":"b1","status":"fixed"}',
            '{"type":"bug","t":20,"id":"b1","status":"fixed"}',
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SessionFormatError, match="fixed twice"):
            load_session(path)

    def test_gaze_coordinates_validated(self, tmp_path):
        path = tmp_path / "s.jsonl"
        bad = '{"type":"gaze","t":0,"p":"P1","x":1.5,"y":0.5,"valid":true}'
        path.write_text(HEADER_LINE + "\n" + bad + "\n")
        with pytest.raises(SessionFormatError, match="outside"):
            load_session(path)


class _Stamped:
    def __init__(self, t):
        self.t = t


class TestWindows:
    def test_boundary_containment(self):
        stream = [_Stamped(0), _Stamped(9999)]
        out = windows(stream, 10000, 10000)
        assert len(out) == 1
        win, members = out[0]
        assert win.index == 0 and len(members) == 2

    def test_half_open_boundary(self):
        stream = [_Stamped(10000)]
        out = windows(stream, 10000, 10000)
        assert len(out) == 2
        assert out[0][1] == []
        assert [s.t for s in out[1][1]] == [10000]

    def test_65s_of_samples_gives_7_windows(self):
        stream = [_Stamped(t) for t in range(0, 65000, 500)]
        out = windows(stream, 10000, 10000)
        assert len(out) == 7
        assert len(out[-1][1]) == 10  # last window partially filled

    def test_partition_property(self):
        rng = random.Random(4)
        ts = sorted(rng.randrange(0, 120000) for _ in range(400))
        stream = [_Stamped(t) for t in ts]
        out = windows(stream, 7000, 7000)
        total = sum(len(m) for _, m in out)
        assert total == len(stream)
        for win, members in out:
            assert all(win.contains(s.t) for s in members)

    def test_ordering_preserved(self):
        stream = [_Stamped(t) for t in [5, 5, 6, 20, 21]]
        out = windows(stream, 10, 10)
        flattened = [s for _, members in out for s in members]
        assert flattened == stream

    def test_end_ms_extends_coverage(self):
        out = windows([], 30000, 30000, end_ms=90000)
        assert len(out) == 3
        assert all(members == [] for _, members in out)

    def test_invalid_size_rejected(self):
        with pytest.raises(ValueError):
            windows([], 0, 10)

    def test_window_span(self):
        w = Window(index=2, start=60000, size=30000)
        assert w.end == 90000
        assert w.contains(60000) and w.contains(89999) and not w.contains(90000)
