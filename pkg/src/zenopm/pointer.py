"""Temporal pointer: coherent sums of equal-width, shifted Gaussian amplitudes.

Times are dimensionless (``t / tau_g``).  A component centred at ``c`` has the
normalized amplitude

    g_c(t) = (2 pi s^2)^(-1/4) exp(-(t - c)^2 / (4 s^2)),   s = sigma_amp,

so ``|g_c|^2`` is a normal density with standard deviation ``s``.  The pulse
field ``exp(-t^2)`` corresponds to ``s = 1/2``.

Mixture weights are complex in general (noisy projections introduce phases)
and are deliberately left unnormalized: the squared norm of the mixture is the
probability that the photon survived whatever produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import CoverageError, DegenerateDistributionError, InvalidParameterError

SAMPLING_STEP = 1e-3
SAMPLING_MARGIN = 6.0
MIN_COVERAGE = 6.0

# centres closer than this (relative to max(1, |c|)) are the same lattice site
_MERGE_RTOL = 1e-12


def _merge(weights: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(centers, kind="stable")
    c = centers[order]
    w = weights[order]
    if c.size < 2:
        return w, c
    gap = np.diff(c) > _MERGE_RTOL * np.maximum(1.0, np.abs(c[1:]))
    group = np.concatenate(([0], np.cumsum(gap)))
    merged_w = np.zeros(group[-1] + 1, dtype=complex)
    np.add.at(merged_w, group, w)
    first = np.concatenate(([True], gap))
    return merged_w, c[first]


@dataclass(frozen=True, eq=False)
class PointerMixture:
    weights: np.ndarray
    centers: np.ndarray
    sigma_amp: float = 0.5
    tau_g: float = 1.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=complex))
        c = np.atleast_1d(np.asarray(self.centers, dtype=float))
        if w.shape != c.shape or w.size == 0:
            raise InvalidParameterError("weights and centers must be equal-length, non-empty")
        if not self.sigma_amp > 0 or not self.tau_g > 0:
            raise InvalidParameterError("sigma_amp and tau_g must be positive")
        w, c = _merge(w, c)
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "centers", c)

    def __len__(self):
        return self.centers.size

    def __eq__(self, other):
        if not isinstance(other, PointerMixture):
            return NotImplemented
        return (
            self.sigma_amp == other.sigma_amp
            and self.tau_g == other.tau_g
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.weights, other.weights)
        )

    @cached_property
    def _overlaps(self) -> np.ndarray:
        d = self.centers[:, None] - self.centers[None, :]
        return np.exp(-(d**2) / (8 * self.sigma_amp**2))

    @cached_property
    def _moments(self) -> tuple[float, float, float]:
        w = self.weights
        s = self._overlaps
        mid = 0.5 * (self.centers[:, None] + self.centers[None, :])
        ww = np.conj(w)[:, None] * w[None, :]
        norm_sq = float(np.real(np.sum(ww * s)))
        if norm_sq <= 0:
            return 0.0, float("nan"), float("nan")
        m1 = float(np.real(np.sum(ww * s * mid))) / norm_sq
        # product of two components is S_ab * N((a+b)/2, s^2)
        var = float(np.real(np.sum(ww * s * (mid - m1) ** 2))) / norm_sq + self.sigma_amp**2
        return norm_sq, m1, float(np.sqrt(max(var, 0.0)))

    def amplitude(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = self.sigma_amp
        pref = (2 * np.pi * s * s) ** -0.25
        out = np.zeros(t.shape, dtype=complex)
        for w, c in zip(self.weights, self.centers):
            out += w * np.exp(-((t - c) ** 2) / (4 * s * s))
        return pref * out

    @cached_property
    def _sampling_table(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.centers[0] - SAMPLING_MARGIN * self.sigma_amp
        hi = self.centers[-1] + SAMPLING_MARGIN * self.sigma_amp
        n = int(np.ceil((hi - lo) / SAMPLING_STEP)) + 1
        grid = lo + SAMPLING_STEP * np.arange(n)
        dens = np.abs(self.amplitude(grid)) ** 2
        cdf = cumulative_trapezoid(dens, grid, initial=0.0)
        return grid, cdf


@dataclass(frozen=True)
class TimeGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0 or self.count < 2:
            raise InvalidParameterError("TimeGrid needs step > 0 and at least 2 points")

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @classmethod
    def covering(cls, m: PointerMixture, step: float = 1e-3, margin: float = 8.0) -> "TimeGrid":
        lo = m.centers[0] - margin * m.sigma_amp
        hi = m.centers[-1] + margin * m.sigma_amp
        return cls(lo, step, int(np.ceil((hi - lo) / step)) + 1)


def initial_pointer(tau_g: float) -> PointerMixture:
    if not tau_g > 0:
        raise InvalidParameterError(f"tau_g must be positive, got {tau_g}")
    return PointerMixture(np.array([1.0]), np.array([0.0]), 0.5, tau_g)


def shift_mixture(m: PointerMixture, delta: float) -> PointerMixture:
    return PointerMixture(m.weights, m.centers + delta, m.sigma_amp, m.tau_g)


def combine(parts) -> PointerMixture:
    """Coherent sum of ``(scale, mixture)`` pairs sharing width and tau_g."""
    parts = list(parts)
    ref = parts[0][1]
    w = np.concatenate([a * m.weights for a, m in parts])
    c = np.concatenate([m.centers for _, m in parts])
    return PointerMixture(w, c, ref.sigma_amp, ref.tau_g)


def mixture_moments(m: PointerMixture) -> tuple[float, float, float]:
    """``(norm_sq, mean, std)`` of ``|sum_k w_k g_k(t)|^2`` in t-tilde units."""
    return m._moments


def density_on_grid(m: PointerMixture, grid: TimeGrid) -> np.ndarray:
    need_lo = m.centers[0] - MIN_COVERAGE * m.sigma_amp
    need_hi = m.centers[-1] + MIN_COVERAGE * m.sigma_amp
    if grid.start > need_lo or grid.stop < need_hi:
        raise CoverageError(
            f"grid [{grid.start:g}, {grid.stop:g}] does not cover [{need_lo:g}, {need_hi:g}]"
        )
    return np.abs(m.amplitude(grid.points)) ** 2


def sample_arrivals(m: PointerMixture, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` arrival times (t-tilde units) from ``|phi|^2 / norm_sq``."""
    if mixture_moments(m)[0] <= 0:
        raise DegenerateDistributionError("pointer has zero norm")
    grid, cdf = m._sampling_table
    u = rng.random(size) * cdf[-1]
    return np.interp(u, cdf, grid)


def sample_arrival(m: PointerMixture, rng: np.random.Generator) -> float:
    return float(sample_arrivals(m, rng, 1)[0])
