"""Photon-counting data generation for the loop experiment.

Each pulse carries at most one signal photon.  The photon must survive the
optical loss of every loop and the intrinsic Zeno projections; if it does, its
arrival time is drawn from the final pointer density, blurred by SPCM jitter,
quantized by the TDC and kept only inside the detector gate.  Background counts
are Poisson per gate and uniform in time.

Pulses are simulated in fixed blocks of ``BLOCK_PULSES``.  Every block owns a
counter-based (Philox) stream keyed by ``(seed, run kind, block index)``, so a
dataset depends only on its config and seed, never on how blocks are
scheduled across workers.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import pointer as ptr
from .errors import InvalidParameterError
from .polarization import PolarizationState
from .zeno import ZenoConfig, iterate_stages, run_protective_measurement

BLOCK_PULSES = 1 << 18
_KIND_KEYS = {"signal": 1, "background": 2}


@dataclass(frozen=True)
class ExperimentConfig:
    zeno: ZenoConfig
    tau_g: float
    n_pulses: int
    seed: int = 0
    dgd_per_loop: float = 0.5
    rep_rate_khz: float = 50.0
    loss_db_per_loop: float = 10.0
    mean_photons_per_pulse: float = 0.1
    background_rate_per_gate: float = 0.0
    gate_start_ns: float = 0.0
    gate_ns: float = 15.0
    spcm_jitter_ns: float = 0.1
    tdc_bin_ns: float = 0.02

    def __post_init__(self):
        if not self.tau_g > 0:
            raise InvalidParameterError("tau_g must be > 0")
        if not self.dgd_per_loop > 0:
            raise InvalidParameterError("dgd_per_loop must be > 0")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise InvalidParameterError(f"n_pulses must be a positive integer, got {self.n_pulses}")
        expected = self.dgd_per_loop / self.tau_g
        if abs(self.zeno.tau_tilde - expected) > 1e-12 * max(1.0, expected):
            raise InvalidParameterError(
                f"zeno.tau_tilde={self.zeno.tau_tilde} != dgd_per_loop/tau_g={expected}"
            )
        for name in ("loss_db_per_loop", "background_rate_per_gate", "spcm_jitter_ns"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        for name in ("rep_rate_khz", "mean_photons_per_pulse", "gate_ns", "tdc_bin_ns"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))

    @classmethod
    def create(cls, loops: int, tau_g: float, n_pulses: int, protection_sigma: float = 0.0,
               dgd_per_loop: float = 0.5, **kwargs) -> "ExperimentConfig":
        zeno = ZenoConfig(dgd_per_loop / tau_g, loops, protection_sigma)
        return cls(zeno=zeno, tau_g=tau_g, n_pulses=n_pulses, dgd_per_loop=dgd_per_loop, **kwargs)

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with changes; ``loops``/``protection_sigma``/``tau_g``/``dgd_per_loop`` rebuild ``zeno``."""
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)

    @property
    def loops(self) -> int:
        return self.zeno.loops

    @property
    def gate_center_ns(self) -> float:
        return self.gate_start_ns + 0.5 * self.gate_ns

    @property
    def optical_transmission(self) -> float:
        return 10.0 ** (-self.loss_db_per_loop * self.loops / 10.0)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "zeno"}
        d["loops"] = self.zeno.loops
        d["protection_sigma"] = self.zeno.protection_sigma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("tau_tilde", None)
        return cls.create(**d)


@dataclass
class TimeTagDataset:
    events: np.ndarray
    gate_start: float
    gate_ns: float
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "signal")

    @property
    def tdc_bin_ns(self) -> float:
        return float(self.meta.get("config", {}).get("tdc_bin_ns", 0.02))

    def __len__(self):
        return self.events.size

    def to_csv(self) -> str:
        lines = ["arrival_ns"]
        lines.extend(f"{t:.12g}" for t in self.events)
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        """Write ``path`` (CSV events) and a JSON sidecar next to it."""
        path = Path(path)
        path.write_text(self.to_csv())
        sidecar = {"gate_start": self.gate_start, "gate_ns": self.gate_ns, **self.meta}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "TimeTagDataset":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        events = np.array(path.read_text().split()[1:], dtype=float)
        gate_start = meta.pop("gate_start")
        gate_ns = meta.pop("gate_ns")
        return cls(events, gate_start, gate_ns, meta)


def block_rng(seed: int, kind: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(_KIND_KEYS[kind], block))
    return np.random.Generator(np.random.Philox(ss))


def detect_times(times: np.ndarray, config: ExperimentConfig, rng: np.random.Generator,
                 jitter: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Jitter, TDC quantization (round half to even) and gating.

    Returns ``(keep, quantized_times)``; ``keep`` marks events inside the gate.
    """
    t = np.asarray(times, dtype=float)
    if jitter and config.spcm_jitter_ns > 0:
        t = t + rng.normal(0.0, config.spcm_jitter_ns, t.shape)
    # snap to 1e-9 ns so the '%.12g' CSV text round-trips exactly
    tq = np.round(np.round(t / config.tdc_bin_ns) * config.tdc_bin_ns, 9)
    eps = 1e-9 * config.tdc_bin_ns
    keep = (tq >= config.gate_start_ns - eps) & (tq <= config.gate_start_ns + config.gate_ns + eps)
    return keep, tq


def apply_detector(true_time: float, config: ExperimentConfig,
                   rng: np.random.Generator) -> float | None:
    """Single-photon detection chain; ``None`` when the event falls outside the gate."""
    keep, t = detect_times(np.array([true_time]), config, rng)
    return float(t[0]) if keep[0] else None


def _profile_table(profile: Callable, config: ExperimentConfig):
    grid = np.linspace(config.gate_start_ns, config.gate_start_ns + config.gate_ns, 4001)
    rate = np.clip(np.asarray(profile(grid), dtype=float), 0.0, None)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(grid))))
    return grid, cdf


def _background(rng, n: int, config: ExperimentConfig, profile_table):
    counts = rng.poisson(config.background_rate_per_gate, n) if config.background_rate_per_gate > 0 \
        else np.zeros(n, dtype=np.int64)
    idx = np.repeat(np.arange(n), counts)
    t = config.gate_start_ns + config.gate_ns * rng.random(idx.size)
    if profile_table is not None:
        grid, cdf = profile_table
        extra = rng.poisson(cdf[-1], n)
        idx2 = np.repeat(np.arange(n), extra)
        t2 = np.interp(rng.random(idx2.size) * cdf[-1], cdf, grid)
        idx, t = np.concatenate((idx, idx2)), np.concatenate((t, t2))
    keep, tq = detect_times(t, config, rng, jitter=False)
    return idx[keep], tq[keep]


def _signal(rng, n: int, config: ExperimentConfig, psi0, ideal_result):
    p_chain = min(1.0, config.mean_photons_per_pulse) * config.optical_transmission
    n_cand = rng.binomial(n, p_chain)
    if n_cand == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx = np.sort(rng.choice(n, n_cand, replace=False))
    if ideal_result is not None:
        survived = rng.random(n_cand) < ideal_result.survival
        idx = idx[survived]
        t_tilde = ptr.sample_arrivals(ideal_result.pointer, rng, idx.size)
    else:
        kept, t_list = [], []
        for i in idx:
            m = iterate_stages(psi0, config.zeno, config.tau_g, rng)
            if rng.random() < ptr.mixture_moments(m)[0]:
                kept.append(i)
                t_list.append(ptr.sample_arrival(m, rng))
        idx = np.asarray(kept, dtype=np.int64)
        t_tilde = np.asarray(t_list, dtype=float)
    keep, tq = detect_times(config.gate_center_ns + config.tau_g * t_tilde, config, rng)
    return idx[keep], tq[keep]


def _run(config: ExperimentConfig, kind: str, psi0, workers: int, background_profile):
    ideal = None
    if kind == "signal" and config.zeno.ideal:
        ideal = run_protective_measurement(psi0, config.zeno, config.tau_g)
    table = _profile_table(background_profile, config) if background_profile else None
    n_blocks = -(-config.n_pulses // BLOCK_PULSES)

    def block(b: int) -> np.ndarray:
        rng = block_rng(config.seed, kind, b)
        n = min(BLOCK_PULSES, config.n_pulses - b * BLOCK_PULSES)
        idx_parts, t_parts = [], []
        if kind == "signal":
            i, t = _signal(rng, n, config, psi0, ideal)
            idx_parts.append(i)
            t_parts.append(t)
        i, t = _background(rng, n, config, table)
        idx_parts.append(i)
        t_parts.append(t)
        idx, t = np.concatenate(idx_parts), np.concatenate(t_parts)
        return t[np.lexsort((t, idx))]

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(block, range(n_blocks)))
    else:
        parts = [block(b) for b in range(n_blocks)]
    events = np.concatenate(parts) if parts else np.zeros(0)
    meta = {"kind": kind, "config": config.to_dict()}
    if psi0 is not None:
        meta["setting"] = {"amp_h": [psi0.amp_h.real, psi0.amp_h.imag],
                           "amp_v": [psi0.amp_v.real, psi0.amp_v.imag]}
    return TimeTagDataset(events, config.gate_start_ns, config.gate_ns, meta)


def simulate_signal_run(config: ExperimentConfig, psi0: PolarizationState, workers: int = 1,
                        background_profile: Callable | None = None) -> TimeTagDataset:
    """Signal plus background counts for ``config.n_pulses`` pulses prepared in ``psi0``.

    ``background_profile(t_ns)`` optionally adds structured background with
    that rate density (counts per ns per gate) on top of the flat rate.
    """
    return _run(config, "signal", psi0, workers, background_profile)


def simulate_background_run(config: ExperimentConfig, workers: int = 1,
                            background_profile: Callable | None = None) -> TimeTagDataset:
    """The same acquisition with the pulse moved out of the gate: background only."""
    return _run(config, "background", None, workers, background_profile)


def expected_signal_counts(config: ExperimentConfig, psi0: PolarizationState) -> float:
    """Mean number of detected signal photons, before gating and with ideal protection."""
    surv = run_protective_measurement(psi0, config.zeno, config.tau_g).survival if config.zeno.ideal else None
    if surv is None:
        raise InvalidParameterError("expected counts are only closed-form for ideal protection")
    return config.n_pulses * min(1.0, config.mean_photons_per_pulse) * config.optical_transmission * surv
