"""Gaze-to-grid mapping and joint visual attention scoring.

Gaze is binned on a persistent grid over the code document: rows cover six
code lines each (absolute line numbers, so the grid does not move when the
pair scrolls) and columns split the screen into horizontal percentile bins.
The JVA score for a window is the cosine similarity of the two participants'
gaze frequency grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import DocumentLayout, GazeSample, ScrollEvent, Window

LINES_PER_ROW = 6
DEFAULT_COLS = 10


class GridSpecMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")


def grid_spec_for(layout: DocumentLayout, cols: int = DEFAULT_COLS) -> GridSpec:
    rows = -(-layout.total_lines // LINES_PER_ROW)
    return GridSpec(rows=rows, cols=cols)


@dataclass
class AttentionGrid:
    spec: GridSpec
    counts: np.ndarray
    window: Window | None = None
    participant: str | None = None

    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv_rows(self):
        """(row, col, count) triples for debugging dumps."""
        for r in range(self.spec.rows):
            for c in range(self.spec.cols):
                yield r, c, int(self.counts[r, c])


def map_gaze_to_cell(sample: GazeSample, layout: DocumentLayout,
                     scroll_line: int, cols: int = DEFAULT_COLS) -> tuple[int, int] | None:
    """Map one valid gaze sample to a (row, col) cell, or None when the gaze
    lands off the document (above it, or past its last line)."""
    if not sample.valid:
        raise ValueError("cannot map an invalid gaze sample")
    y_px = sample.y_norm * layout.screen_h_px
    if y_px < layout.doc_top_px:
        return None
    codeline = scroll_line + int((y_px - layout.doc_top_px) // layout.line_height_px)
    if codeline >= layout.total_lines:
        return None
    row = codeline // LINES_PER_ROW
    col = min(int(sample.x_norm * cols), cols - 1)
    return row, col


def accumulate(samples: list[GazeSample], layout: DocumentLayout,
               scroll_events: list[ScrollEvent], window: Window | None = None,
               participant: str | None = None, cols: int = DEFAULT_COLS) -> AttentionGrid:
    """Count valid on-document gaze samples per grid cell.

    Scroll position is piecewise constant: each sample uses the most recent
    scroll event at or before its timestamp (0 before any scroll event).
    Invalid and off-document samples are dropped, not interpolated.
    """
    spec = grid_spec_for(layout, cols)
    counts = np.zeros((spec.rows, spec.cols), dtype=np.int64)
    si = 0
    scroll_line = 0
    for s in samples:
        if not s.valid:
            continue
        while si < len(scroll_events) and scroll_events[si].t <= s.t:
            scroll_line = scroll_events[si].first_visible_line
            si += 1
        cell = map_gaze_to_cell(s, layout, scroll_line, cols)
        if cell is not None:
            counts[cell] += 1
    return AttentionGrid(spec=spec, counts=counts, window=window, participant=participant)


@dataclass(frozen=True)
class JVAScore:
    value: float
    window: Window | None = None


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two non-negative vectors; 0.0 when either is all zero."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def jva_cosine(g1: AttentionGrid, g2: AttentionGrid) -> JVAScore:
    if g1.spec != g2.spec:
        raise GridSpecMismatch(f"grid specs differ: {g1.spec} vs {g2.spec}")
    return JVAScore(value=cosine_similarity(g1.counts, g2.counts), window=g1.window)
