"""Session data model, JSON-lines persistence and fixed-size windowing.

A session file is UTF-8 JSON-lines: one header object on line 1, then one
event object per line with a ``type`` discriminator. Timestamps are integer
milliseconds from session start, which keeps window arithmetic exact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

PARTICIPANTS = ("P1", "P2")

EVENT_TYPES = ("gaze", "pupil", "scroll", "edit", "bug", "control")
CONTROL_KINDS = ("pause", "cancel", "ignore")

# Suppression window started by a "pause" control event.
PAUSE_MS = 120_000


class SessionFormatError(ValueError):
    """Malformed session file; carries the offending 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class GazeSample:
    t: int
    participant: str
    x_norm: float | None
    y_norm: float | None
    valid: bool


@dataclass(frozen=True)
class PupilSample:
    t: int
    participant: str
    diameter_mm: float


@dataclass(frozen=True)
class ScrollEvent:
    t: int
    first_visible_line: int


@dataclass(frozen=True)
class CodeEditEvent:
    t: int
    participant: str
    lines_changed: int


@dataclass(frozen=True)
class BugEvent:
    t: int
    bug_id: str
    status: str = "fixed"


@dataclass(frozen=True)
class ControlEvent:
    t: int
    kind: str


@dataclass(frozen=True)
class DocumentLayout:
    doc_top_px: float
    line_height_px: float
    total_lines: int
    screen_w_px: float
    screen_h_px: float

    def __post_init__(self):
        if self.line_height_px <= 0:
            raise ValueError("line_height_px must be > 0")
        if self.total_lines < 1:
            raise ValueError("total_lines must be >= 1")
        if self.screen_w_px <= 0 or self.screen_h_px <= 0:
            raise ValueError("screen dimensions must be > 0")
        if self.doc_top_px >= self.screen_h_px:
            raise ValueError("doc_top_px must be < screen_h_px")


@dataclass(frozen=True)
class SessionHeader:
    layout: DocumentLayout
    pupil_rate_hz: float
    gaze_rate_hz: float
    baseline: tuple[int, int]

    def __post_init__(self):
        t0, t1 = self.baseline
        if not (0 <= t0 < t1):
            raise ValueError("baseline segment must satisfy 0 <= t0 < t1")
        if self.pupil_rate_hz <= 0 or self.gaze_rate_hz <= 0:
            raise ValueError("sampling rates must be > 0")


@dataclass
class SessionRecording:
    """One dyad session: header plus time-ordered event streams."""

    header: SessionHeader
    gaze: list[GazeSample] = field(default_factory=list)
    pupil: list[PupilSample] = field(default_factory=list)
    scroll: list[ScrollEvent] = field(default_factory=list)
    edits: list[CodeEditEvent] = field(default_factory=list)
    bugs: list[BugEvent] = field(default_factory=list)
    controls: list[ControlEvent] = field(default_factory=list)

    def duration_ms(self) -> int:
        """Largest timestamp across all streams (0 for an empty session)."""
        last = 0
        for stream in (self.gaze, self.pupil, self.scroll, self.edits,
                       self.bugs, self.controls):
            if stream:
                last = max(last, stream[-1].t)
        return last

    def gaze_for(self, participant: str) -> list[GazeSample]:
        return [s for s in self.gaze if s.participant == participant]

    def pupil_for(self, participant: str) -> list[PupilSample]:
        return [s for s in self.pupil if s.participant == participant]


@dataclass(frozen=True)
class Window:
    """Half-open interval [start, start + size)."""

    index: int
    start: int
    size: int

    @property
    def end(self) -> int:
        return self.start + self.size

    def contains(self, t: int) -> bool:
        return self.start <= t < self.end


def windows(stream, size: int, hop: int, end_ms: int | None = None):
    """Split a time-ordered stream into windows of `size` ms every `hop` ms.

    Window k spans [k*hop, k*hop + size). A sample belongs to a window iff its
    timestamp falls in that half-open interval; with hop == size the windows
    partition the timeline. Empty windows are yielded. `end_ms` extends (or
    truncates) coverage past the last sample; by default windows run far
    enough to contain every sample.
    """
    if size <= 0 or hop <= 0:
        raise ValueError("size and hop must be > 0")
    if end_ms is None:
        end_ms = (stream[-1].t + 1) if stream else 0
    n_windows = max(0, math.ceil(end_ms / hop)) if end_ms > 0 else 0
    # Cap so the last window still intersects [0, end_ms).
    out = []
    i = 0
    n = len(stream)
    for k in range(n_windows):
        start = k * hop
        if start >= end_ms:
            break
        win = Window(k, start, size)
        # Advance to the first sample in the window, then collect. For
        # hop < size windows overlap, so collection restarts from a scan
        # of the sorted stream instead of consuming it.
        while i < n and stream[i].t < start:
            i += 1
        j = i
        members = []
        while j < n and stream[j].t < win.end:
            members.append(stream[j])
            j += 1
        out.append((win, members))
    return out


# ---------------------------------------------------------------------------
# JSON-lines serialization
# ---------------------------------------------------------------------------

_TYPE_RANK = {name: rank for rank, name in enumerate(EVENT_TYPES)}


def _header_obj(header: SessionHeader) -> dict:
    lay = header.layout
    return {
        "layout": {
            "doc_top_px": lay.doc_top_px,
            "line_height_px": lay.line_height_px,
            "total_lines": lay.total_lines,
            "screen_w_px": lay.screen_w_px,
            "screen_h_px": lay.screen_h_px,
        },
        "pupil_rate_hz": header.pupil_rate_hz,
        "gaze_rate_hz": header.gaze_rate_hz,
        "baseline": [header.baseline[0], header.baseline[1]],
    }


def _event_obj(kind: str, ev) -> dict:
    if kind == "gaze":
        obj = {"type": "gaze", "t": ev.t, "p": ev.participant}
        if ev.valid:
            obj["x"] = ev.x_norm
            obj["y"] = ev.y_norm
        obj["valid"] = ev.valid
        return obj
    if kind == "pupil":
        return {"type": "pupil", "t": ev.t, "p": ev.participant, "d": ev.diameter_mm}
    if kind == "scroll":
        return {"type": "scroll", "t": ev.t, "line": ev.first_visible_line}
    if kind == "edit":
        return {"type": "edit", "t": ev.t, "p": ev.participant, "lines": ev.lines_changed}
    if kind == "bug":
        return {"type": "bug", "t": ev.t, "id": ev.bug_id, "status": ev.status}
    if kind == "control":
        return {"type": "control", "t": ev.t, "kind": ev.kind}
    raise ValueError(f"unknown event kind {kind!r}")


def serialize_session(rec: SessionRecording) -> str:
    """Render a recording as canonical JSON-lines text.

    The event order is a pure function of the recording (merge by timestamp,
    then a fixed type rank, then per-stream position), so load -> serialize
    round-trips byte-identically.
    """
    rows: list[tuple[int, int, int, dict]] = []
    for kind, stream in (("gaze", rec.gaze), ("pupil", rec.pupil),
                         ("scroll", rec.scroll), ("edit", rec.edits),
                         ("bug", rec.bugs), ("control", rec.controls)):
        rank = _TYPE_RANK[kind]
        for seq, ev in enumerate(stream):
            rows.append((ev.t, rank, seq, _event_obj(kind, ev)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [json.dumps(_header_obj(rec.header), separators=(",", ":"))]
    lines.extend(json.dumps(obj, separators=(",", ":")) for _, _, _, obj in rows)
    return "\n".join(lines) + "\n"


def save_session(rec: SessionRecording, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(serialize_session(rec))
    os.replace(tmp, path)


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise SessionFormatError(f"missing field {key!r}", line_no)
    return obj[key]


def _parse_header(obj: dict, line_no: int) -> SessionHeader:
    lay = _require(obj, "layout", line_no)
    try:
        layout = DocumentLayout(
            doc_top_px=float(_require(lay, "doc_top_px", line_no)),
            line_height_px=float(_require(lay, "line_height_px", line_no)),
            total_lines=int(_require(lay, "total_lines", line_no)),
            screen_w_px=float(_require(lay, "screen_w_px", line_no)),
            screen_h_px=float(_require(lay, "screen_h_px", line_no)),
        )
        t0, t1 = _require(obj, "baseline", line_no)
        return SessionHeader(
            layout=layout,
            pupil_rate_hz=float(_require(obj, "pupil_rate_hz", line_no)),
            gaze_rate_hz=float(_require(obj, "gaze_rate_hz", line_no)),
            baseline=(int(t0), int(t1)),
        )
    except SessionFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise SessionFormatError(f"invalid header: {exc}", line_no) from exc


def load_session(path: str | os.PathLike) -> SessionRecording:
    """Parse a session file, enforcing schema and per-stream time order."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise SessionFormatError("missing header", 1)
        try:
            header_obj = json.loads(first)
        except json.JSONDecodeError as exc:
            raise SessionFormatError(f"malformed JSON: {exc.msg}", 1) from exc
        if not isinstance(header_obj, dict) or "layout" not in header_obj:
            raise SessionFormatError("missing header", 1)
        rec = SessionRecording(header=_parse_header(header_obj, 1))

        last_t: dict[str, int] = {}
        fixed_bugs: set[str] = set()
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SessionFormatError(f"malformed JSON: {exc.msg}", line_no) from exc
            kind = obj.get("type")
            if kind not in EVENT_TYPES:
                raise SessionFormatError(f"unknown event type {kind!r}", line_no)
            try:
                t = int(_require(obj, "t", line_no))
            except (TypeError, ValueError) as exc:
                raise SessionFormatError("non-integer timestamp", line_no) from exc
            if t < 0:
                raise SessionFormatError("negative timestamp", line_no)

            order_key = kind
            if kind in ("gaze", "pupil", "edit"):
                p = _require(obj, "p", line_no)
                if p not in PARTICIPANTS:
                    raise SessionFormatError(f"unknown participant {p!r}", line_no)
                order_key = f"{kind}:{p}"
            if t < last_t.get(order_key, 0):
                raise SessionFormatError(
                    f"out-of-order timestamp in {order_key} stream", line_no)
            last_t[order_key] = t

            try:
                _parse_event(rec, kind, obj, t, line_no, fixed_bugs)
            except SessionFormatError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise SessionFormatError(f"invalid {kind} event: {exc}", line_no) from exc
    return rec


def _parse_event(rec: SessionRecording, kind: str, obj: dict, t: int,
                 line_no: int, fixed_bugs: set[str]) -> None:
    if kind == "gaze":
        valid = bool(_require(obj, "valid", line_no))
        x = y = None
        if valid:
            x = float(_require(obj, "x", line_no))
            y = float(_require(obj, "y", line_no))
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise SessionFormatError("gaze coordinates outside [0,1]", line_no)
        rec.gaze.append(GazeSample(t, obj["p"], x, y, valid))
    elif kind == "pupil":
        d = float(_require(obj, "d", line_no))
        if d <= 0:
            raise SessionFormatError("pupil diameter must be > 0", line_no)
        rec.pupil.append(PupilSample(t, obj["p"], d))
    elif kind == "scroll":
        line = int(_require(obj, "line", line_no))
        if not (0 <= line < rec.header.layout.total_lines):
            raise SessionFormatError("first_visible_line out of range", line_no)
        rec.scroll.append(ScrollEvent(t, line))
    elif kind == "edit":
        lines = int(_require(obj, "lines", line_no))
        if lines < 1:
            raise SessionFormatError("lines_changed must be >= 1", line_no)
        rec.edits.append(CodeEditEvent(t, obj["p"], lines))
    elif kind == "bug":
        bug_id = str(_require(obj, "id", line_no))
        status = str(_require(obj, "status", line_no))
        if status != "fixed":
            raise SessionFormatError(f"unknown bug status {status!r}", line_no)
        if bug_id in fixed_bugs:
            raise SessionFormatError(f"bug {bug_id!r} fixed twice", line_no)
        fixed_bugs.add(bug_id)
        rec.bugs.append(BugEvent(t, bug_id, status))
    elif kind == "control":
        ckind = str(_require(obj, "kind", line_no))
        if ckind not in CONTROL_KINDS:
            raise SessionFormatError(f"unknown control kind {ckind!r}", line_no)
        rec.controls.append(ControlEvent(t, ckind))
