"""Deterministic synthetic dyad-session generator.

Sessions realize prescribed collaboration-state targets through two fully
controlled mechanisms:

* Gaze: each participant samples cells from a small shared set with
  probability q and from participant-private disjoint sets otherwise, so the
  attention-grid cosine is a known function of q (q^2 / (q^2 + (1-q)^2)).
  Resting windows cycle q through fixed values, giving an exact baseline
  band; H/L targets sit far outside it, AVG targets reproduce the rest range.

* Pupil: the diameter signal is a constant plus an 18 Hz dither tone (a
  stable threshold floor for the oscillation index) plus isolated unit-shape
  transients at sample indices divisible by four. Each transient yields
  exactly one counted oscillation event, so a window with k transients
  measures k/10 events per second, exactly. Effort levels and joint-effort
  bin matching reduce to picking per-window transient counts, which the
  effort-plan solver below does against the resting bands it also controls.

A script whose state targets cannot be realized raises
UnreachableTargetError instead of silently approximating.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .streams import (
    BugEvent,
    CodeEditEvent,
    DocumentLayout,
    GazeSample,
    PupilSample,
    SessionHeader,
    SessionRecording,
)

GAZE_RATE_HZ = 50.0
PUPIL_RATE_HZ = 200.0
TICK_MS = 30_000
ME_WINDOW_MS = 10_000
WINDOWS_PER_TICK = TICK_MS // ME_WINDOW_MS

DEFAULT_REST_TICKS = 3

DEFAULT_LAYOUT = DocumentLayout(doc_top_px=100.0, line_height_px=20.0,
                                total_lines=120, screen_w_px=1920.0,
                                screen_h_px=1080.0)

# Grid cells used by the gaze emitters; all inside the unscrolled viewport.
SHARED_CELLS = ((1, 2), (2, 5))
OWN_CELLS = {"P1": ((4, 1), (5, 3)), "P2": ((6, 7), (7, 8))}

JVA_Q_REST_CYCLE = (0.45, 0.50, 0.55)
JVA_Q_AVG_CYCLE = (0.47, 0.50, 0.53)
JVA_Q_HIGH = 0.97
JVA_Q_LOW = 0.03

# Pupil signal shape.
PUPIL_BASE_MM = 4.0
PUPIL_DITHER_MM = 0.01
PUPIL_DITHER_HZ = 18.0
PUPIL_SPIKE_MM = 0.4
SPIKE_GRID = 4          # transient indices are multiples of this
SPIKE_EDGE_SAMPLES = 64  # keep transients away from window edges

# Per-window transient counts: resting bands and the calibration extremes.
BAND_CYCLES = {"low": (2, 3, 4), "mid": (5, 6, 7), "high": (12, 13, 14)}
CALIB_K = 18             # pins every session's effort maximum
LEVEL_MARGIN_K = 0.5     # clearance beyond a band edge, in transient counts
BIN_GAP_MIN = 2          # bin distance that guarantees a non-match

LEVELS = ("H", "AVG", "L")


class ScriptError(ValueError):
    pass


class UnreachableTargetError(ValueError):
    pass


@dataclass(frozen=True)
class ScriptSegment:
    duration_ms: int
    target: tuple[str, str, str, str]          # (jva, jme, me1, me2)
    edits_per_min: float = 0.0
    bug_fix_times: tuple[int, ...] = ()        # offsets within the segment

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ScriptError("segment duration must be > 0")
        if self.duration_ms % TICK_MS != 0:
            raise ScriptError(
                f"segment duration {self.duration_ms} must be a multiple of "
                f"the {TICK_MS} ms evaluation tick")
        if len(self.target) != 4 or any(v not in LEVELS for v in self.target):
            raise ScriptError(f"bad target {self.target!r}")
        if self.edits_per_min < 0:
            raise ScriptError("edits_per_min must be >= 0")
        for off in self.bug_fix_times:
            if not (0 <= off < self.duration_ms):
                raise ScriptError("bug fix time outside its segment")

    @property
    def ticks(self) -> int:
        return self.duration_ms // TICK_MS


@dataclass(frozen=True)
class ScenarioScript:
    segments: tuple[ScriptSegment, ...]
    rest_ticks: int = DEFAULT_REST_TICKS
    name: str = "session"

    def __post_init__(self):
        if not self.segments:
            raise ScriptError("script needs at least one segment")
        if self.rest_ticks < 3:
            raise ScriptError("rest_ticks must be >= 3 for a usable baseline")

    @property
    def task_ticks(self) -> int:
        return 1 + sum(s.ticks for s in self.segments)  # +1 calibration tick

    @property
    def total_ticks(self) -> int:
        return self.rest_ticks + self.task_ticks


def load_script(path: str | os.PathLike) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return script_from_dict(obj)


def script_from_dict(obj: dict) -> ScenarioScript:
    try:
        segments = tuple(
            ScriptSegment(
                duration_ms=int(seg["duration_ms"]),
                target=tuple(seg["target"]),
                edits_per_min=float(seg.get("edits_per_min", 0.0)),
                bug_fix_times=tuple(int(t) for t in seg.get("bug_fix_times", ())),
            )
            for seg in obj["segments"])
    except (KeyError, TypeError) as exc:
        raise ScriptError(f"malformed script: {exc}") from exc
    return ScenarioScript(segments=segments,
                          rest_ticks=int(obj.get("rest_ticks", DEFAULT_REST_TICKS)),
                          name=str(obj.get("name", "session")))


def script_to_dict(script: ScenarioScript) -> dict:
    return {
        "name": script.name,
        "rest_ticks": script.rest_ticks,
        "segments": [
            {"duration_ms": s.duration_ms, "target": list(s.target),
             "edits_per_min": s.edits_per_min,
             "bug_fix_times": list(s.bug_fix_times)}
            for s in script.segments
        ],
    }


# ---------------------------------------------------------------------------
# Effort planning: choose resting bands and per-window transient counts
# ---------------------------------------------------------------------------

def spike_bin(k: int) -> int:
    """Discretization bin of a k-transient window once the calibration
    windows have pinned the session range to [0, CALIB_K] counts."""
    return int(math.floor(10.0 * k / CALIB_K + 0.5))


@dataclass(frozen=True)
class ParticipantPlan:
    band: tuple[int, ...]          # resting cycle of transient counts
    rest_multiset: tuple[int, ...]  # actual resting counts over all windows
    lower_k: float                 # baseline band in transient-count units
    upper_k: float

    def level_of(self, k: int) -> str:
        if k > self.upper_k:
            return "H"
        if k < self.lower_k:
            return "L"
        return "AVG"

    def level_ok(self, k: int, level: str) -> bool:
        if level == "H":
            return k >= self.upper_k + LEVEL_MARGIN_K
        if level == "L":
            return k <= self.lower_k - LEVEL_MARGIN_K
        return self.lower_k <= k <= self.upper_k


def _participant_plan(band: tuple[int, ...], rest_ticks: int,
                      alternate: bool) -> ParticipantPlan:
    rest = []
    for tick in range(rest_ticks):
        rest.extend(_rest_tick_counts(band, tick, alternate))
    arr = np.asarray(rest, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std())
    return ParticipantPlan(band=band, rest_multiset=tuple(rest),
                           lower_k=mean - 2.0 * sd, upper_k=mean + 2.0 * sd)


def _rest_tick_counts(band: tuple[int, ...], tick: int, alternate: bool) -> list[int]:
    # The second participant varies its multiset on odd ticks so the resting
    # joint-effort values alternate instead of degenerating to a constant.
    if alternate and tick % 2 == 1:
        return [band[0], band[2], band[2]]
    return [band[0], band[1], band[2]]


_H_CANDIDATES = (16, 12, 9, 8, 6)
_L_CANDIDATES = (0, 2, 3, 8, 10)


def _k_candidates(plan: ParticipantPlan, level: str) -> tuple[int, ...]:
    if level == "AVG":
        return plan.band
    pool = _H_CANDIDATES if level == "H" else _L_CANDIDATES
    return tuple(k for k in pool if plan.level_ok(k, level))


@dataclass(frozen=True)
class SegmentEffortPlan:
    """Per-window transient counts for one segment, as (k1, k2) triples
    repeated per tick; odd ticks may use a different triple."""
    even_tick: tuple[tuple[int, int], ...]
    odd_tick: tuple[tuple[int, int], ...]

    def counts_for(self, tick_in_segment: int) -> tuple[tuple[int, int], ...]:
        return self.odd_tick if tick_in_segment % 2 == 1 else self.even_tick


def _solve_jme_high(me1, me2, p1, p2) -> SegmentEffortPlan | None:
    # A full-recurrence tick needs one bin shared by every window of both
    # participants, so each side holds a constant count; an AVG side pins to
    # the middle of its resting band.
    c1 = ((p1.band[1],) if me1 == "AVG" else _k_candidates(p1, me1))
    c2 = ((p2.band[1],) if me2 == "AVG" else _k_candidates(p2, me2))
    for k1 in c1:
        for k2 in c2:
            if spike_bin(k1) == spike_bin(k2):
                tick = tuple(((k1, k2),) * WINDOWS_PER_TICK)
                return SegmentEffortPlan(tick, tick)
    return None


def _solve_jme_low(me1, me2, p1, p2) -> SegmentEffortPlan | None:
    c1 = _k_candidates(p1, me1)
    c2 = _k_candidates(p2, me2)
    if me1 == "AVG" and me2 == "AVG":
        bins1 = {spike_bin(k) for k in c1}
        bins2 = {spike_bin(k) for k in c2}
        if all(abs(b1 - b2) >= BIN_GAP_MIN for b1 in bins1 for b2 in bins2):
            tick = tuple(zip(c1, c2))
            return SegmentEffortPlan(tick, tick)
        return None
    if me1 == "AVG" or me2 == "AVG":
        cyc, others, flip = (c1, c2, False) if me1 == "AVG" else (c2, c1, True)
        for k_o in others:
            if all(abs(spike_bin(k_o) - spike_bin(k_c)) >= BIN_GAP_MIN for k_c in cyc):
                pairs = tuple((k_c, k_o) if not flip else (k_o, k_c) for k_c in cyc)
                return SegmentEffortPlan(pairs, pairs)
        return None
    for k1 in c1:
        for k2 in c2:
            if abs(spike_bin(k1) - spike_bin(k2)) >= BIN_GAP_MIN:
                tick = tuple(((k1, k2),) * WINDOWS_PER_TICK)
                return SegmentEffortPlan(tick, tick)
    return None


def _distinct_bin_pair(cands) -> tuple[int, int] | None:
    for u in cands:
        for v in cands:
            if spike_bin(u) != spike_bin(v):
                return u, v
    return None


def _solve_jme_avg(me1, me2, p1, p2, paired_rest) -> SegmentEffortPlan | None:
    if not paired_rest:
        # degenerate resting joint effort (constant 0): AVG means staying
        # at zero cross-recurrence, i.e. all windows unmatched
        return _solve_jme_low(me1, me2, p1, p2)
    pair1 = _distinct_bin_pair(_k_candidates(p1, me1))
    pair2 = _distinct_bin_pair(_k_candidates(p2, me2))
    if pair1 is None or pair2 is None:
        return None
    (u1, v1), (u2, v2) = pair1, pair2
    if spike_bin(u1) != spike_bin(u2) or spike_bin(v1) != spike_bin(v2):
        # realign: search pairs with matching bins across participants
        found = None
        for a1 in _k_candidates(p1, me1):
            for b1 in _k_candidates(p1, me1):
                if spike_bin(a1) == spike_bin(b1):
                    continue
                a2 = next((k for k in _k_candidates(p2, me2)
                           if spike_bin(k) == spike_bin(a1)), None)
                b2 = next((k for k in _k_candidates(p2, me2)
                           if spike_bin(k) == spike_bin(b1)), None)
                if a2 is not None and b2 is not None:
                    found = (a1, b1, a2, b2)
                    break
            if found:
                break
        if not found:
            return None
        u1, v1, u2, v2 = found
    # even ticks: multisets {u,u,v} vs {u,v,v} -> CRR 4/9; odd: aligned 5/9
    even = ((u1, u2), (u1, v2), (v1, v2))
    odd = ((u1, u2), (u1, u2), (v1, v2))
    return SegmentEffortPlan(even, odd)


@dataclass(frozen=True)
class EffortPlan:
    p1: ParticipantPlan
    p2: ParticipantPlan
    paired_rest: bool
    segments: tuple[SegmentEffortPlan, ...]


_BAND_PREFERENCE = (
    ("mid", "mid"), ("low", "low"), ("high", "high"),
    ("low", "high"), ("high", "low"),
    ("low", "mid"), ("mid", "low"), ("mid", "high"), ("high", "mid"),
)


def plan_effort(script: ScenarioScript) -> EffortPlan:
    """Choose resting bands and per-segment transient schedules satisfying
    every segment's (jme, me1, me2) target, or report the first segment that
    cannot be realized."""
    failures = []
    for name1, name2 in _BAND_PREFERENCE:
        band1 = BAND_CYCLES[name1]
        band2 = BAND_CYCLES[name2]
        paired = name1 == name2
        p1 = _participant_plan(band1, script.rest_ticks, alternate=False)
        p2 = _participant_plan(band2, script.rest_ticks, alternate=paired)
        plans = []
        ok = True
        for i, seg in enumerate(script.segments):
            jme, me1, me2 = seg.target[1], seg.target[2], seg.target[3]
            if jme == "H":
                plan = _solve_jme_high(me1, me2, p1, p2)
            elif jme == "L":
                # disjoint resting bins give a constant-zero resting joint
                # effort, whose baseline cannot classify anything as L
                plan = _solve_jme_low(me1, me2, p1, p2) if paired else None
            else:
                plan = _solve_jme_avg(me1, me2, p1, p2, paired)
            if plan is None:
                failures.append((name1, name2, i, seg.target))
                ok = False
                break
            plans.append(plan)
        if ok:
            return EffortPlan(p1=p1, p2=p2, paired_rest=paired,
                              segments=tuple(plans))
    raise UnreachableTargetError(
        "no resting-band assignment realizes all segment targets; "
        f"failures per attempt: {failures}")


# ---------------------------------------------------------------------------
# Stream emitters
# ---------------------------------------------------------------------------

def _cell_center(cell: tuple[int, int], layout: DocumentLayout,
                 cols: int) -> tuple[float, float]:
    row, col = cell
    codeline = row * 6 + 2
    y_px = layout.doc_top_px + (codeline + 0.5) * layout.line_height_px
    return (col + 0.5) / cols, y_px / layout.screen_h_px


def emit_gaze_window(rec: SessionRecording, rng: np.random.Generator, t0: int,
                     q: float, layout: DocumentLayout = DEFAULT_LAYOUT,
                     cols: int = 10, rate_hz: float = GAZE_RATE_HZ) -> None:
    """Append one 30 s gaze window for both participants with shared-cell
    probability q."""
    n = int(round(TICK_MS * rate_hz / 1000.0))
    step = 1000.0 / rate_hz
    for participant in ("P1", "P2"):
        shared_draws = rng.random(n) < q
        pick = rng.integers(0, 2, size=n)
        for i in range(n):
            cell = (SHARED_CELLS[pick[i]] if shared_draws[i]
                    else OWN_CELLS[participant][pick[i]])
            x, y = _cell_center(cell, layout, cols)
            rec.gaze.append(GazeSample(t0 + int(i * step), participant, x, y, True))


def spike_positions(k: int, n_samples: int) -> list[int]:
    """Evenly spread interior transient indices, snapped to the spike grid."""
    if k <= 0:
        return []
    raw = np.linspace(SPIKE_EDGE_SAMPLES, n_samples - SPIKE_EDGE_SAMPLES, k)
    pos = sorted({int(p) // SPIKE_GRID * SPIKE_GRID for p in raw})
    if len(pos) != k:
        raise ValueError(f"cannot place {k} separated transients in {n_samples} samples")
    return pos


def emit_pupil_window(rec: SessionRecording, t0: int, k1: int, k2: int,
                      rate_hz: float = PUPIL_RATE_HZ) -> None:
    """Append one 10 s pupil window per participant with k transients each."""
    n = int(round(ME_WINDOW_MS * rate_hz / 1000.0))
    step = 1000.0 / rate_hz
    base_t = np.arange(n) * (1.0 / rate_hz)
    dither = PUPIL_DITHER_MM * np.sin(2 * np.pi * PUPIL_DITHER_HZ * (t0 / 1000.0 + base_t))
    for participant, k in (("P1", k1), ("P2", k2)):
        values = PUPIL_BASE_MM + dither.copy()
        for p in spike_positions(k, n):
            values[p] += PUPIL_SPIKE_MM
        for i in range(n):
            rec.pupil.append(PupilSample(t0 + int(i * step), participant,
                                         float(values[i])))


def _emit_effort_tick(rec: SessionRecording, t0: int,
                      counts: tuple[tuple[int, int], ...]) -> None:
    for w, (k1, k2) in enumerate(counts):
        emit_pupil_window(rec, t0 + w * ME_WINDOW_MS, k1, k2)


def _q_for_target(level: str, tick_index: int) -> float:
    if level == "H":
        return JVA_Q_HIGH
    if level == "L":
        return JVA_Q_LOW
    return JVA_Q_AVG_CYCLE[tick_index % 3]


# ---------------------------------------------------------------------------
# Session assembly
# ---------------------------------------------------------------------------

def generate_session(script: ScenarioScript, seed: int,
                     layout: DocumentLayout = DEFAULT_LAYOUT,
                     cols: int = 10) -> SessionRecording:
    """Realize a script as a full dual-stream recording.

    Layout: `rest_ticks` resting ticks (the declared baseline segment), one
    calibration tick pinning each participant's effort range, then the
    scripted segments. Deterministic for a given (script, seed).
    """
    effort_plan = plan_effort(script)
    rng = np.random.default_rng(seed)
    rest_ms = script.rest_ticks * TICK_MS
    header = SessionHeader(layout=layout, pupil_rate_hz=PUPIL_RATE_HZ,
                           gaze_rate_hz=GAZE_RATE_HZ, baseline=(0, rest_ms))
    rec = SessionRecording(header=header)

    # resting prefix
    for tick in range(script.rest_ticks):
        t0 = tick * TICK_MS
        emit_gaze_window(rec, rng, t0, JVA_Q_REST_CYCLE[tick % 3], layout, cols)
        k1s = _rest_tick_counts(effort_plan.p1.band, tick, alternate=False)
        k2s = _rest_tick_counts(effort_plan.p2.band, tick,
                                alternate=effort_plan.paired_rest)
        for w in range(WINDOWS_PER_TICK):
            emit_pupil_window(rec, t0 + w * ME_WINDOW_MS, k1s[w], k2s[w])

    # calibration tick: pins both effort series to the [0, CALIB_K] range
    calib_t0 = rest_ms
    first_target = script.segments[0].target
    emit_gaze_window(rec, rng, calib_t0, _q_for_target(first_target[0], 0),
                     layout, cols)
    _emit_effort_tick(rec, calib_t0, ((0, 0), (CALIB_K, CALIB_K), (0, 0)))

    # scripted segments
    tick_cursor = script.rest_ticks + 1
    segment_t0 = calib_t0 + TICK_MS
    bug_counter = 0
    for seg, seg_plan in zip(script.segments, effort_plan.segments):
        for tick_in_seg in range(seg.ticks):
            t0 = segment_t0 + tick_in_seg * TICK_MS
            emit_gaze_window(rec, rng, t0,
                             _q_for_target(seg.target[0], tick_cursor), layout, cols)
            _emit_effort_tick(rec, t0, seg_plan.counts_for(tick_in_seg))
            tick_cursor += 1
        if seg.edits_per_min > 0:
            interval = 60_000.0 / seg.edits_per_min
            n_edits = int(seg.duration_ms / interval)
            for i in range(n_edits):
                t = segment_t0 + int((i + 0.5) * interval)
                participant = "P1" if i % 2 == 0 else "P2"
                rec.edits.append(CodeEditEvent(t, participant, 1 + i % 4))
        for off in seg.bug_fix_times:
            bug_counter += 1
            rec.bugs.append(BugEvent(segment_t0 + off, f"bug{bug_counter}"))
        segment_t0 += seg.duration_ms

    rec.gaze.sort(key=lambda s: s.t)
    rec.pupil.sort(key=lambda s: s.t)
    rec.edits.sort(key=lambda s: s.t)
    rec.bugs.sort(key=lambda s: s.t)
    return rec


def single_state_script(target, ticks: int = 10, edits_per_min: float = 2.0,
                        bug_fix_times=(), rest_ticks: int = DEFAULT_REST_TICKS,
                        name: str = "session") -> ScenarioScript:
    """Convenience script holding one collaboration state for `ticks` ticks."""
    seg = ScriptSegment(duration_ms=ticks * TICK_MS, target=tuple(target),
                        edits_per_min=edits_per_min,
                        bug_fix_times=tuple(bug_fix_times))
    return ScenarioScript(segments=(seg,), rest_ticks=rest_ticks, name=name)


def generate_decay_session(seed: int, task_ticks: int = 12,
                           q_start: float = 0.50, q_step: float = 0.012,
                           rest_ticks: int = DEFAULT_REST_TICKS,
                           layout: DocumentLayout = DEFAULT_LAYOUT,
                           cols: int = 10) -> SessionRecording:
    """Session whose attention overlap decays linearly across the task while
    effort stays average; the attention score crosses the resting band at a
    predictable tick. Used to exercise forecast-driven anticipation."""
    rng = np.random.default_rng(seed)
    band = BAND_CYCLES["mid"]
    p1 = _participant_plan(band, rest_ticks, alternate=False)
    p2 = _participant_plan(band, rest_ticks, alternate=True)
    avg_plan = _solve_jme_avg("AVG", "AVG", p1, p2, True)
    header = SessionHeader(layout=layout, pupil_rate_hz=PUPIL_RATE_HZ,
                           gaze_rate_hz=GAZE_RATE_HZ,
                           baseline=(0, rest_ticks * TICK_MS))
    rec = SessionRecording(header=header)
    for tick in range(rest_ticks):
        t0 = tick * TICK_MS
        emit_gaze_window(rec, rng, t0, JVA_Q_REST_CYCLE[tick % 3], layout, cols)
        k1s = _rest_tick_counts(band, tick, alternate=False)
        k2s = _rest_tick_counts(band, tick, alternate=True)
        _emit_effort_tick(rec, t0, tuple(zip(k1s, k2s)))
    calib_t0 = rest_ticks * TICK_MS
    emit_gaze_window(rec, rng, calib_t0, JVA_Q_AVG_CYCLE[0], layout, cols)
    _emit_effort_tick(rec, calib_t0, ((0, 0), (CALIB_K, CALIB_K), (0, 0)))
    for i in range(task_ticks):
        t0 = (rest_ticks + 1 + i) * TICK_MS
        q = max(JVA_Q_LOW, q_start - q_step * (i + 1))
        emit_gaze_window(rec, rng, t0, q, layout, cols)
        _emit_effort_tick(rec, t0, avg_plan.counts_for(i))
    rec.gaze.sort(key=lambda s: s.t)
    rec.pupil.sort(key=lambda s: s.t)
    return rec


# ---------------------------------------------------------------------------
# Closed-loop behavior model (wiring checks)
# ---------------------------------------------------------------------------

@dataclass
class BehaviorModel:
    """Maps a latent pair-alignment level to generator targets, and folds
    delivered feedback back into alignment. Built for wiring checks: the
    boost weights encode the intended ordering of condition effectiveness,
    they are not claims about humans."""

    alignment: float = 0.52
    drift: float = 0.045
    drift_jitter: float = 0.04
    # Light scaffolds nudge alignment below the drift rate, so a struggling
    # pair stays struggling long enough for hint escalation to mature; the
    # hint itself restores alignment outright and advances the bug.
    boosts: dict[str, float] = field(default_factory=lambda: {
        "A1": 0.0, "A2": 0.02, "A3": 0.03, "A4": 0.03, "A5": 0.55})
    hint_progress: float = 0.4
    bug_progress: float = 0.0
    bugs_fixed: int = 0

    def regime(self) -> tuple[str, str, str, str]:
        if self.alignment >= 0.70:
            return ("H", "H", "AVG", "AVG")
        if self.alignment >= 0.45:
            return ("AVG", "AVG", "AVG", "AVG")
        return ("L", "L", "H", "H")

    def apply_feedback(self, actions) -> None:
        for action in actions:
            self.alignment += self.boosts.get(action, 0.0)
        if "A5" in actions:
            self.bug_progress += self.hint_progress

    def advance_tick(self, rng: np.random.Generator) -> int:
        """Natural drift plus bug progress; returns bugs fixed this tick."""
        self.alignment -= self.drift + rng.uniform(0.0, self.drift_jitter)
        self.alignment = min(0.95, max(0.05, self.alignment))
        rate = 0.04 + 0.22 * self.alignment
        self.bug_progress += rate
        fixed = int(self.bug_progress)
        if fixed:
            self.bug_progress -= fixed
            self.bugs_fixed += fixed
        return fixed
