"""Arrival-time analysis: histogram, subtract scaled background, truncate,
normalize, then turn mean delays into expectation values and uncertainties.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    BinningMismatchError,
    EmptySignalError,
    InsufficientDataError,
    InvalidCalibrationError,
    UndefinedScaleError,
)

DEFAULT_BIN_NS = 0.1
DEFAULT_WINDOW_OFFSET_NS = 2.0
DEFAULT_WINDOW_SPAN_NS = 2.0


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or counts.shape != (edges.size - 1,):
            raise BinningMismatchError("need len(counts) == len(bin_edges) - 1 >= 1")
        widths = np.diff(edges)
        if np.any(widths <= 0) or np.ptp(widths) > 1e-9:
            raise BinningMismatchError("bin edges must be strictly increasing and uniform")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def peak_index(self) -> int:
        """Earliest bin holding the maximum count."""
        return int(np.argmax(self.counts))

    def same_binning(self, other: "Histogram") -> bool:
        return self.bin_edges.shape == other.bin_edges.shape and np.allclose(
            self.bin_edges, other.bin_edges, rtol=0, atol=1e-9
        )


@dataclass(frozen=True, eq=False)
class ArrivalDistribution:
    bin_centers: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    slope_uncertainty: float
    points: tuple

    def tau_max(self, loops: int) -> float:
        return self.slope * loops


@dataclass(frozen=True)
class MeasurementReport:
    tau: float
    tau_std: float
    expectation: float
    expectation_raw: float
    sigma_pm: float
    sigma_sm: float
    ratio: float
    n_detected: int
    u_pm: float
    u_sm: float
    tau_max: float

    def to_dict(self) -> dict:
        return asdict(self)


def build_histogram(data, bin_ns: float = DEFAULT_BIN_NS) -> Histogram:
    """Bin a TimeTagDataset over its gate.

    Bins are whole groups of TDC ticks centred on the ticks they hold, so the
    first edge sits half a tick before the gate start.
    """
    tdc = data.tdc_bin_ns
    ratio = bin_ns / tdc
    if not bin_ns > 0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise BinningMismatchError(f"bin width {bin_ns} ns is not a multiple of the TDC bin {tdc} ns")
    per_bin = int(round(ratio))
    first_tick = int(round(data.gate_start / tdc))
    n_ticks = int(np.floor(data.gate_ns / tdc + 1e-9)) + 1
    n_bins = -(-n_ticks // per_bin)
    edges = (first_tick - 0.5 + per_bin * np.arange(n_bins + 1)) * tdc
    ticks = np.round(np.asarray(data.events, dtype=float) / tdc).astype(np.int64) - first_tick
    idx = np.clip(ticks // per_bin, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    return Histogram(edges, counts)


def default_background_window(h: Histogram, offset_ns: float = DEFAULT_WINDOW_OFFSET_NS,
                              span_ns: float = DEFAULT_WINDOW_SPAN_NS) -> tuple[float, float]:
    """``span_ns`` beginning ``offset_ns`` after the peak; mirrored to the early side if
    that runs past the histogram."""
    peak = h.centers[h.peak_index()]
    lo, hi = peak + offset_ns, peak + offset_ns + span_ns
    if hi > h.bin_edges[-1]:
        lo, hi = peak - offset_ns - span_ns, peak - offset_ns
    return lo, hi


def _window_mask(h: Histogram, window) -> np.ndarray:
    lo, hi = window
    c = h.centers
    return (c >= lo) & (c < hi)


def scale_subtract_background(signal: Histogram, background: Histogram,
                              window: tuple[float, float] | None = None) -> Histogram:
    """``signal - alpha * background`` with alpha matching the counts in ``window``."""
    if not signal.same_binning(background):
        raise BinningMismatchError("signal and background histograms use different bins")
    if window is None:
        window = default_background_window(signal)
    mask = _window_mask(signal, window)
    b = background.counts[mask].sum()
    if b <= 0:
        raise UndefinedScaleError(f"background has no counts in window {window}")
    alpha = signal.counts[mask].sum() / b
    return Histogram(signal.bin_edges, signal.counts - alpha * background.counts)


def truncate_histogram(h: Histogram) -> Histogram:
    """Cut at the first negative bin on each side of the peak (that bin included)."""
    c = h.counts
    if not np.any(c > 0):
        raise EmptySignalError("histogram has no positive bin")
    peak = h.peak_index()
    neg_left = np.nonzero(c[:peak] < 0)[0]
    start = neg_left[-1] + 1 if neg_left.size else 0
    neg_right = np.nonzero(c[peak + 1:] < 0)[0]
    stop = peak + 1 + neg_right[0] if neg_right.size else c.size
    return Histogram(h.bin_edges[start:stop + 1], c[start:stop])


def normalize(h: Histogram) -> ArrivalDistribution:
    if np.any(h.counts < 0):
        raise EmptySignalError("cannot normalize a histogram with negative counts")
    total = h.counts.sum()
    if total <= 0:
        raise EmptySignalError("histogram is empty")
    return ArrivalDistribution(h.centers, h.counts / total)


def arrival_stats(d: ArrivalDistribution) -> tuple[float, float]:
    p, t = d.probabilities, d.bin_centers
    mean = float(np.dot(p, t))
    return mean, float(np.sqrt(np.dot(p, (t - mean) ** 2)))


def relative_delay(setting_mean: float, fast_axis_mean: float) -> float:
    return setting_mean - fast_axis_mean


def fit_calibration(points) -> CalibrationFit:
    """Least-squares line through the origin, ``delay = slope * loops``."""
    pts = tuple((int(l), float(t)) for l, t in points)
    if len(pts) < 2:
        raise InsufficientDataError("calibration needs at least two (loops, delay) points")
    loops = np.array([p[0] for p in pts], dtype=float)
    if np.any(loops <= 0) or np.unique(loops).size != loops.size:
        raise InsufficientDataError("loop counts must be positive and distinct")
    delay = np.array([p[1] for p in pts])
    sxx = np.dot(loops, loops)
    slope = float(np.dot(loops, delay) / sxx)
    resid = delay - slope * loops
    var = np.dot(resid, resid) / (len(pts) - 1)
    return CalibrationFit(slope, float(np.sqrt(var / sxx)), pts)


def compute_report(d: ArrivalDistribution, fast_axis_mean: float, tau_max: float,
                   n_detected: int) -> MeasurementReport:
    if not tau_max > 0:
        raise InvalidCalibrationError(f"tau_max must be > 0, got {tau_max}")
    if n_detected < 1:
        raise EmptySignalError("n_detected must be >= 1")
    mean, std = arrival_stats(d)
    return report_from_moments(relative_delay(mean, fast_axis_mean), std, tau_max, n_detected)


def report_from_moments(tau: float, tau_std: float, tau_max: float,
                        n_detected: int) -> MeasurementReport:
    """Expectation value and PM/SM uncertainties from a relative delay and its spread."""
    if not tau_max > 0:
        raise InvalidCalibrationError(f"tau_max must be > 0, got {tau_max}")
    raw = 2 * tau / tau_max - 1
    expectation = min(1.0, max(-1.0, raw))
    sigma_pm = 2 * tau_std / tau_max
    sigma_sm = float(np.sqrt(max(0.0, 1 - expectation**2)))
    ratio = sigma_sm / sigma_pm if sigma_pm > 0 else 0.0
    root_n = np.sqrt(n_detected)
    return MeasurementReport(tau, tau_std, expectation, raw, sigma_pm, sigma_sm, ratio,
                             int(n_detected), sigma_pm / root_n, sigma_sm / root_n, tau_max)


@dataclass(frozen=True)
class PipelineResult:
    histogram: Histogram
    subtracted: Histogram
    truncated: Histogram
    distribution: ArrivalDistribution
    mean: float
    std: float
    n_detected: int


def run_pipeline(signal, background=None, bin_ns: float = DEFAULT_BIN_NS,
                 window: tuple[float, float] | None = None,
                 window_offset_ns: float = DEFAULT_WINDOW_OFFSET_NS,
                 window_span_ns: float = DEFAULT_WINDOW_SPAN_NS) -> PipelineResult:
    """build -> subtract -> truncate -> normalize for one signal/background pair.

    ``background=None`` skips subtraction, for background-free data.
    ``n_detected`` is the background-subtracted count kept after truncation.
    """
    h = build_histogram(signal, bin_ns)
    if background is None:
        sub = h
    else:
        hb = build_histogram(background, bin_ns)
        if window is None:
            window = default_background_window(h, window_offset_ns, window_span_ns)
        sub = scale_subtract_background(h, hb, window)
    tr = truncate_histogram(sub)
    dist = normalize(tr)
    mean, std = arrival_stats(dist)
    n = int(round(tr.counts.sum()))
    return PipelineResult(h, sub, tr, dist, mean, std, max(n, 1))


def peak_to_background(signal: Histogram, background: Histogram) -> float:
    """Peak-bin counts over the mean per-bin background (an SNR figure)."""
    bg = background.counts.mean()
    return float(signal.counts.max() / bg) if bg > 0 else float("inf")


def series_csv(centers, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bin_center_ns", "value"))
    for c, v in zip(centers, values):
        w.writerow((f"{c:.6f}", f"{v:.12g}"))
    return buf.getvalue()
