"""Time-interval analysis of detection streams.

Histograms count every pair ``(a, b)`` with ``t_b - t_a`` in ``[lo, hi)``;
bin ``j`` covers ``[lo + j*w, lo + (j+1)*w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import EmptyChannel, FitDiverged, InsufficientCounts, NoPeak
from .sim import PS_PER_S, TagStream

DEFAULT_BIN_PS = 16
DEFAULT_RANGE_PS = 4096
DEFAULT_WINDOW_PS = 64
FLOOR_GAP_PS = 700.0
TWO_SQRT2 = 2.0 * math.sqrt(2.0)
CLASSICAL_VISIBILITY = 1.0 / math.sqrt(2.0)


@dataclass
class Histogram:
    bin_width: int
    lo: int
    hi: int
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        if (self.hi - self.lo) % self.bin_width:
            raise ValueError("range must be an integer number of bins")
        n = (self.hi - self.lo) // self.bin_width
        if self.counts is None:
            self.counts = np.zeros(n, dtype=np.int64)
        elif len(self.counts) != n:
            raise ValueError(f"expected {n} bins, got {len(self.counts)}")

    @classmethod
    def empty(cls, bin_width=DEFAULT_BIN_PS, range_ps=DEFAULT_RANGE_PS) -> "Histogram":
        return cls(int(bin_width), -int(range_ps), int(range_ps), None)

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, self.bin_width)

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + self.bin_width / 2.0

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.bin_width, self.lo, self.hi) != (other.bin_width, other.lo, other.hi):
            raise ValueError("histogram binning differs")
        return Histogram(self.bin_width, self.lo, self.hi, self.counts + other.counts)

    def __eq__(self, other):
        return (isinstance(other, Histogram)
                and (self.bin_width, self.lo, self.hi) == (other.bin_width, other.lo, other.hi)
                and np.array_equal(self.counts, other.counts))


def pair_counts(a: np.ndarray, b: np.ndarray, bin_width: int, lo: int, hi: int) -> np.ndarray:
    """Histogram of ``b - a`` over all pairs of two sorted time arrays.

    For each ``a`` tag the matching ``b`` tags form a contiguous run found by
    binary search; the k-th member of every run is gathered in one
    vectorised step, so the loop runs only as long as the longest run.
    """
    nbins = (hi - lo) // bin_width
    out = np.zeros(nbins, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return out
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    start = np.searchsorted(b, a + lo, side="left")
    stop = np.searchsorted(b, a + hi, side="left")
    n = stop - start
    live = np.flatnonzero(n > 0)
    k = 0
    while len(live):
        d = b[start[live] + k] - a[live]
        out += np.bincount((d - lo) // bin_width, minlength=nbins)
        k += 1
        live = live[n[live] > k]
    return out


class StreamingCorrelator:
    """Incremental correlator for time-ordered chunks of two channels.

    Every :meth:`feed` must carry tags no earlier than those already fed.
    Tags that can still pair with future input are carried between calls;
    older ones are dropped, so memory stays bounded by the rate times the
    histogram span.
    """

    def __init__(self, bin_width=DEFAULT_BIN_PS, range_ps=DEFAULT_RANGE_PS, lo=None, hi=None):
        lo = -int(range_ps) if lo is None else int(lo)
        hi = int(range_ps) if hi is None else int(hi)
        self.hist = Histogram(int(bin_width), lo, hi, None)
        self._span = max(abs(lo), abs(hi))
        self._a = np.zeros(0, dtype=np.int64)
        self._b = np.zeros(0, dtype=np.int64)

    def feed(self, a_new, b_new) -> None:
        a_new = np.asarray(a_new, dtype=np.int64)
        b_new = np.asarray(b_new, dtype=np.int64)
        if len(a_new) == 0 and len(b_new) == 0:
            return
        firsts = [x[0] for x in (a_new, b_new) if len(x)]
        cut = min(firsts) - self._span
        a_old = self._a[self._a >= cut]
        b_old = self._b[self._b >= cut]
        h = self.hist
        a_all = np.concatenate([a_old, a_new])
        b_all = np.concatenate([b_old, b_new])
        h.counts += pair_counts(a_all, b_new, h.bin_width, h.lo, h.hi)
        h.counts += pair_counts(a_new, b_old, h.bin_width, h.lo, h.hi)
        self._a, self._b = a_all, b_all

    @property
    def histogram(self) -> Histogram:
        h = self.hist
        return Histogram(h.bin_width, h.lo, h.hi, h.counts.copy())


def cross_correlate(stream: TagStream, ch_a: int, ch_b: int, bin_width=DEFAULT_BIN_PS,
                    range_ps=DEFAULT_RANGE_PS, chunk_ps: int | None = None) -> Histogram:
    """Coincidence histogram of ``t_b - t_a`` for two channels of a sorted stream."""
    if bin_width < 1:
        raise ValueError("bin width must be >= 1 ps")
    a, b = stream.times(ch_a), stream.times(ch_b)
    if len(a) == 0:
        raise EmptyChannel(f"channel {ch_a} has no tags")
    if len(b) == 0:
        raise EmptyChannel(f"channel {ch_b} has no tags")
    corr = StreamingCorrelator(bin_width, range_ps)
    if chunk_ps is None:
        corr.feed(a, b)
    else:
        end = max(a[-1], b[-1]) + 1
        for t0 in range(0, int(end), int(chunk_ps)):
            t1 = t0 + chunk_ps
            corr.feed(a[(a >= t0) & (a < t1)], b[(b >= t0) & (b < t1)])
    return corr.histogram


def window_count(a: np.ndarray, b: np.ndarray, window_ps: float, center_ps: float = 0.0) -> int:
    """Pairs with ``t_b - t_a`` in ``[center - w/2, center + w/2)``."""
    lo = int(math.floor(center_ps - window_ps / 2.0))
    hi = lo + int(round(window_ps))
    return int(pair_counts(a, b, hi - lo, lo, hi)[0])


# ---------------------------------------------------------------- peak statistics

@dataclass(frozen=True)
class CoincidenceStats:
    ccr_hz: float
    car: float
    car_err: float
    peak_fwhm_ps: float
    window_ps: float
    accidental_hz: float  # accidental rate inside one window
    peak_counts: int
    accidental_per_window: float
    floor_counts: int

    def as_dict(self) -> dict:
        return {"ccr_hz": self.ccr_hz, "car": self.car, "car_err": self.car_err,
                "fwhm_ps": self.peak_fwhm_ps, "window_ps": self.window_ps,
                "accidental_hz": self.accidental_hz, "peak_counts": self.peak_counts,
                "floor_counts": self.floor_counts}


def _floor_mask(hist: Histogram, peak_offsets: Sequence[float], gap: float) -> np.ndarray:
    c = hist.centers
    mask = np.ones(len(c), dtype=bool)
    for p in peak_offsets:
        mask &= np.abs(c - p) >= gap
    return mask


def _window_mask(hist: Histogram, window_ps: float, center_ps: float) -> np.ndarray:
    c = hist.centers
    return (c >= center_ps - window_ps / 2.0) & (c < center_ps + window_ps / 2.0)


def peak_fwhm(hist: Histogram, floor: float | None = None, center_ps: float | None = None,
              search_ps: float = 400.0) -> float:
    """Full width at half of (peak - floor), linearly interpolated between bin centres."""
    counts = hist.counts.astype(float)
    c = hist.centers
    if floor is None:
        m = _floor_mask(hist, [0.0 if center_ps is None else center_ps], FLOOR_GAP_PS)
        floor = float(counts[m].mean()) if m.any() else 0.0
    if center_ps is None:
        i = int(np.argmax(counts))
    else:
        near = np.flatnonzero(np.abs(c - center_ps) <= search_ps)
        i = int(near[np.argmax(counts[near])])
    height = counts[i] - floor
    if height <= 0:
        raise NoPeak("no peak above the accidental floor")
    half = floor + height / 2.0
    j = i
    while j > 0 and counts[j - 1] > half:
        j -= 1
    if j == 0:
        raise NoPeak("peak does not fall to half maximum inside the range")
    left = c[j - 1] + (half - counts[j - 1]) / (counts[j] - counts[j - 1]) * hist.bin_width
    j = i
    while j < len(counts) - 1 and counts[j + 1] > half:
        j += 1
    if j == len(counts) - 1:
        raise NoPeak("peak does not fall to half maximum inside the range")
    right = c[j] + (counts[j] - half) / (counts[j] - counts[j + 1]) * hist.bin_width
    return float(right - left)


def coincidence_stats(hist: Histogram, window_ps: float, duration_s: float, center_ps: float = 0.0,
                      peak_offsets: Sequence[float] = (0.0,), floor_gap_ps: float = FLOOR_GAP_PS,
                      require_peak: bool = True) -> CoincidenceStats:
    """CCR, CAR and peak width from a coincidence histogram.

    The accidental level is the mean count per bin over all bins at least
    ``floor_gap_ps`` away from every expected peak, scaled to the window.
    ``require_peak=False`` accepts a peakless histogram (CAR ~ 1, NaN width).
    """
    win = _window_mask(hist, window_ps, center_ps)
    if not win.any():
        raise ValueError("window covers no histogram bin")
    floor_bins = _floor_mask(hist, peak_offsets, floor_gap_ps)
    if not floor_bins.any():
        raise ValueError("no histogram bins far enough from the peaks to estimate the floor")
    nwin = int(win.sum())
    peak = int(hist.counts[win].sum())
    floor_total = int(hist.counts[floor_bins].sum())
    per_bin = floor_total / floor_bins.sum()
    acc_window = per_bin * nwin
    has_peak = hist.counts.max() >= 5.0 * per_bin and hist.counts.max() > 0
    if require_peak and not has_peak:
        raise NoPeak(f"max bin {hist.counts.max()} below 5x floor {per_bin:.3g}")
    if acc_window > 0 and floor_total > 0:
        car = peak / acc_window
        rel = math.sqrt((1.0 / peak if peak else 0.0) + 1.0 / floor_total)
        car_err = car * rel
    else:
        car, car_err = math.inf, math.nan
    fwhm = math.nan
    if has_peak:
        try:
            fwhm = peak_fwhm(hist, floor=per_bin, center_ps=center_ps)
        except NoPeak:
            if require_peak:
                raise
    return CoincidenceStats(
        ccr_hz=peak / duration_s, car=car, car_err=car_err, peak_fwhm_ps=fwhm,
        window_ps=nwin * hist.bin_width, accidental_hz=acc_window / duration_s,
        peak_counts=peak, accidental_per_window=acc_window, floor_counts=floor_total,
    )


# ---------------------------------------------------------------- Z basis

@dataclass(frozen=True)
class ZVisibility:
    visibility: float
    visibility_err: float
    matched: int
    mismatched: int


def z_visibility(stream: TagStream, z0: int, zp0: int, zp1: int,
                 window_ps: float = DEFAULT_WINDOW_PS, center_ps: float = 0.0,
                 min_counts: int = 100) -> ZVisibility:
    """((Z0-Z'0) - (Z0-Z'1)) / ((Z0-Z'0) + (Z0-Z'1)) at equal arrival slot.

    The binomial error uses p = (n01 + 1/2) / (n + 1) so that a run with no
    mismatched coincidences still reports a finite uncertainty.
    """
    a = stream.times(z0)
    n00 = window_count(a, stream.times(zp0), window_ps, center_ps)
    n01 = window_count(a, stream.times(zp1), window_ps, center_ps)
    n = n00 + n01
    if n < min_counts:
        raise InsufficientCounts(f"only {n} Z-basis coincidences (need {min_counts})")
    v = (n00 - n01) / n
    p = (n01 + 0.5) / (n + 1.0)
    return ZVisibility(v, 2.0 * math.sqrt(p * (1.0 - p) / n), n00, n01)


# ---------------------------------------------------------------- fringe fitting

@dataclass(frozen=True)
class FringeFit:
    """``offset * (1 + visibility * cos(frequency * x + phase0))``."""

    offset: float
    offset_err: float
    visibility: float
    visibility_err: float
    phase0: float
    phase0_err: float
    frequency: float
    residual_chisq: float  # per degree of freedom
    converged: bool

    def model(self, x):
        return self.offset * (1.0 + self.visibility * np.cos(self.frequency * np.asarray(x) + self.phase0))


def _linear_fit(x, y, w, k):
    A = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    Aw = A * w[:, None]
    coef, *_ = np.linalg.lstsq(Aw, y * w, rcond=None)
    r = (A @ coef - y) * w
    return coef, float(r @ r), Aw


def fit_sinusoid(x, counts, stddev=None, frequency: float = 1.0, refine_frequency: bool = True,
                 max_chisq: float = 10.0) -> FringeFit:
    """Weighted least-squares fringe fit.

    For a fixed spatial frequency the model is linear in (offset, in-phase,
    quadrature) amplitudes; the frequency itself is refined by golden-section
    search on chi^2.  Points with zero or missing ``stddev`` fall back to
    ``sqrt(max(count, 1))``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(counts, dtype=float)
    if len(x) < 5:
        raise ValueError("need at least 5 points")
    if np.ptp(x) * frequency < math.pi:
        raise ValueError("points must span at least half a period")
    if stddev is None:
        sd = np.sqrt(np.maximum(y, 1.0))
    else:
        sd = np.asarray(stddev, dtype=float)
        sd = np.where(sd > 0, sd, np.sqrt(np.maximum(y, 1.0)))
    w = 1.0 / sd
    k = float(frequency)
    converged = True
    if refine_frequency:
        grid = k * np.linspace(0.8, 1.2, 41)
        chi = np.array([_linear_fit(x, y, w, g)[1] for g in grid])
        i = int(np.argmin(chi))
        if 0 < i < len(grid) - 1 and chi[i - 1] > chi[i] < chi[i + 1]:
            res = optimize.minimize_scalar(lambda g: _linear_fit(x, y, w, g)[1],
                                           bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                           method="golden", options={"xtol": 1e-10})
            k = float(res.x)
            converged = bool(res.success)
        elif chi.max() - chi.min() > 1e-12 * max(chi.max(), 1.0):
            # minimum pinned at the search edge
            k = float(grid[i])
            converged = False
    coef, chisq, Aw = _linear_fit(x, y, w, k)
    dof = len(x) - 3
    red = chisq / dof if dof > 0 else 0.0
    if red > max_chisq:
        raise FitDiverged(f"chi^2/dof = {red:.3g} exceeds {max_chisq}")
    cov = np.linalg.pinv(Aw.T @ Aw)
    a, b, c = coef
    amp = math.hypot(b, c)
    vis = amp / a
    phase = math.atan2(-c, b)
    if amp > 0:
        J_v = np.array([-amp / a**2, b / (a * amp), c / (a * amp)])
        J_p = np.array([0.0, c / amp**2, -b / amp**2])
        v_err = math.sqrt(max(J_v @ cov @ J_v, 0.0))
        p_err = math.sqrt(max(J_p @ cov @ J_p, 0.0))
    else:
        v_err = math.sqrt((cov[1, 1] + cov[2, 2]) / 2.0) / abs(a)
        p_err = math.pi
    return FringeFit(offset=float(a), offset_err=math.sqrt(cov[0, 0]), visibility=float(vis),
                     visibility_err=v_err, phase0=phase, phase0_err=p_err, frequency=k,
                     residual_chisq=red, converged=converged)


# ---------------------------------------------------------------- Bell parameter

@dataclass(frozen=True)
class BellResult:
    s_value: float
    s_err: float
    violates: bool
    sigma: float  # (S - 2) / s_err

    def as_dict(self) -> dict:
        return {"s_value": self.s_value, "s_err": self.s_err, "s_sigma": self.sigma,
                "violates_bell": self.violates}


def visibility_to_s(v: float, v_err: float = 0.0) -> BellResult:
    """CHSH value ``S = 2 sqrt(2) V`` of a two-photon fringe of visibility V."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility {v} outside [0, 1]")
    s = v * TWO_SQRT2
    err = v_err * TWO_SQRT2
    sigma = (s - 2.0) / err if err > 0 else (math.inf if s > 2.0 else -math.inf if s < 2.0 else 0.0)
    return BellResult(s, err, s > 2.0, sigma)


__all__ = [
    "Histogram", "pair_counts", "StreamingCorrelator", "cross_correlate", "window_count",
    "CoincidenceStats", "coincidence_stats", "peak_fwhm", "ZVisibility", "z_visibility",
    "FringeFit", "fit_sinusoid", "BellResult", "visibility_to_s", "PS_PER_S",
]
