"""Mental-effort measurement from pupil streams and joint-effort synchrony.

Per-participant effort for a window is the rate of thresholded high-frequency
pupil-diameter oscillation events: a wavelet detail band is extracted with a
16-tap least-asymmetric orthogonal filter pair over a 2-level pyramid, its
modulus maxima are thresholded with the universal threshold (MAD-based sigma),
and the surviving count is divided by the window duration in seconds.

Joint effort between the two discretized effort series is the categorical
cross-recurrence rate (radius 0); a windowed cosine variant is kept behind a
switch for sensitivity comparison.
"""

from __future__ import annotations

import math

import numpy as np

from .gaze import cosine_similarity
from .streams import PupilSample

# 16-tap least-asymmetric (symlet) orthogonal decomposition lowpass.
_DEC_LO = np.array([
    -0.0033824159510061256,
    -0.00054213233179114812,
    0.031695087811492981,
    0.0076074873249176054,
    -0.14329423835080971,
    -0.061273359067658524,
    0.48135965125837221,
    0.77718575170052351,
    0.3644418948353314,
    -0.051945838107709037,
    -0.027219029917056003,
    0.049137179673607506,
    0.0038087520138906151,
    -0.014952258337048231,
    -0.0003029205147213668,
    0.0018899503327594609,
])
_DEC_HI = np.array([((-1) ** k) * _DEC_LO[len(_DEC_LO) - 1 - k]
                    for k in range(len(_DEC_LO))])

DWT_LEVEL = 2
MAD_TO_SIGMA = 0.6745

BLINK_MAD_K = 3.0
MAX_INTERP_GAP_MS = 200.0
MAX_GAP_FRACTION = 0.10
DISCRETE_BINS = 10  # effort series are discretized to integers 0..10


class InsufficientSamplesError(ValueError):
    pass


class ExcessiveGapsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Wavelet detail band and oscillation-event count
# ---------------------------------------------------------------------------

def _analyze(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Correlate over a half-sample symmetric extension, keep even outputs.
    pad = len(taps) - 1
    ext = np.concatenate([x[:pad][::-1], x, x[-pad:][::-1]])
    full = np.convolve(ext, taps[::-1], mode="valid")
    return full[::2]


def detail_coefficients(x: np.ndarray, level: int = DWT_LEVEL) -> np.ndarray:
    approx = np.asarray(x, dtype=np.float64)
    detail = np.array([])
    for _ in range(level):
        detail = _analyze(approx, _DEC_HI)
        approx = _analyze(approx, _DEC_LO)
    return detail


def modulus_maxima(d: np.ndarray) -> np.ndarray:
    """Indices of interior local maxima of |d| (>= both sides, > one side)."""
    m = np.abs(d)
    if len(m) < 3:
        return np.array([], dtype=np.int64)
    mid, left, right = m[1:-1], m[:-2], m[2:]
    mask = (mid >= left) & (mid >= right) & ((mid > left) | (mid > right))
    return np.nonzero(mask)[0] + 1


def universal_threshold(d: np.ndarray) -> float:
    mad = float(np.median(np.abs(d - np.median(d))))
    sigma = mad / MAD_TO_SIGMA
    return sigma * math.sqrt(2.0 * math.log(len(d)))


def ipa_from_series(values: np.ndarray, duration_s: float,
                    level: int = DWT_LEVEL) -> float:
    """Oscillation events per second for one uniformly sampled window."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise InsufficientSamplesError("need at least 2 samples")
    d = detail_coefficients(values, level)
    lam = universal_threshold(d)
    idx = modulus_maxima(d)
    surviving = int(np.count_nonzero(np.abs(d[idx]) > lam)) if len(idx) else 0
    return surviving / duration_s


# ---------------------------------------------------------------------------
# Pupil preprocessing
# ---------------------------------------------------------------------------

def pupil_window_values(samples: list[PupilSample], start_ms: int, end_ms: int,
                        rate_hz: float, blink_mad_k: float = BLINK_MAD_K,
                        max_interp_gap_ms: float = MAX_INTERP_GAP_MS,
                        max_gap_fraction: float = MAX_GAP_FRACTION) -> np.ndarray:
    """Resample one window of pupil samples onto a uniform grid.

    Blink artefacts (diameter more than `blink_mad_k` MADs below the window
    median) are dropped. Missing grid slots are bridged linearly; runs longer
    than `max_interp_gap_ms` count against a gap budget of
    `max_gap_fraction` of the window, beyond which the window is rejected.
    """
    window_ms = end_ms - start_ms
    n_slots = int(round(window_ms * rate_hz / 1000.0))
    if n_slots < 2:
        raise InsufficientSamplesError("window shorter than two sample periods")

    diams = np.array([s.diameter_mm for s in samples], dtype=np.float64)
    if len(diams) >= 2:
        med = np.median(diams)
        mad = np.median(np.abs(diams - med))
        keep = diams >= med - blink_mad_k * mad
        samples = [s for s, k in zip(samples, keep) if k]

    if len(samples) < 2:
        raise InsufficientSamplesError(
            f"{len(samples)} usable samples in window [{start_ms},{end_ms})")

    grid = np.full(n_slots, np.nan)
    for s in samples:
        slot = int((s.t - start_ms) * rate_hz / 1000.0)
        if 0 <= slot < n_slots:
            grid[slot] = s.diameter_mm

    missing = np.isnan(grid)
    if missing.any():
        slot_ms = 1000.0 / rate_hz
        long_gap_slots = 0
        i = 0
        while i < n_slots:
            if missing[i]:
                j = i
                while j < n_slots and missing[j]:
                    j += 1
                if (j - i) * slot_ms > max_interp_gap_ms:
                    long_gap_slots += j - i
                i = j
            else:
                i += 1
        if long_gap_slots * slot_ms > max_gap_fraction * window_ms:
            raise ExcessiveGapsError(
                f"{long_gap_slots * slot_ms:.0f} ms of long gaps in a "
                f"{window_ms} ms window")
        idx = np.arange(n_slots)
        grid[missing] = np.interp(idx[missing], idx[~missing], grid[~missing])
    return grid


def ipa_for_window(samples: list[PupilSample], start_ms: int, end_ms: int,
                   rate_hz: float, level: int = DWT_LEVEL) -> float:
    values = pupil_window_values(samples, start_ms, end_ms, rate_hz)
    return ipa_from_series(values, (end_ms - start_ms) / 1000.0, level)


# ---------------------------------------------------------------------------
# Discretization and joint effort
# ---------------------------------------------------------------------------

def discretize_me(series) -> np.ndarray:
    """Min-max map a per-session effort series to integer bins 0..10.

    Bin edges round half up; a constant series maps to the middle bin 5.
    """
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty effort series")
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax == vmin:
        return np.full(values.shape, DISCRETE_BINS // 2, dtype=np.int64)
    scaled = (values - vmin) / (vmax - vmin) * DISCRETE_BINS
    bins = np.floor(scaled + 0.5).astype(np.int64)
    return np.clip(bins, 0, DISCRETE_BINS)


def jme_crqa(a, b) -> float:
    """Categorical cross-recurrence rate: |{(i,j): a_i == b_j}| / (|a|*|b|)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty discretized series")
    if a.min() < 0 or b.min() < 0 or a.max() > DISCRETE_BINS or b.max() > DISCRETE_BINS:
        raise ValueError("discretized values must lie in 0..10")
    ca = np.bincount(a, minlength=DISCRETE_BINS + 1)
    cb = np.bincount(b, minlength=DISCRETE_BINS + 1)
    matches = int(np.dot(ca, cb))
    return matches / (a.size * b.size)


def jme_cosine(a, b) -> float:
    """Cosine similarity of two aligned non-negative effort vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("effort values must be non-negative")
    return cosine_similarity(a, b)
