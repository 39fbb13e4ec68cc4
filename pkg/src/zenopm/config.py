"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Unknown sections or keys are errors, never silently ignored.

    [experiment]
    tau_g = 1.6
    n_pulses = 1300000
    loss_db_per_loop = 0

    [settings]
    theta_over_quarter_pi = 0, 2
    loops = 1, 2, 3

    [analysis]
    bin_ns = 0.1
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import DEFAULT_BIN_NS, DEFAULT_WINDOW_OFFSET_NS, DEFAULT_WINDOW_SPAN_NS
from .errors import ConfigError, ZenoPMError
from .montecarlo import ExperimentConfig

_EXPERIMENT_KEYS = {
    "tau_g": float,
    "n_pulses": int,
    "seed": int,
    "dgd_per_loop": float,
    "rep_rate_khz": float,
    "loss_db_per_loop": float,
    "mean_photons_per_pulse": float,
    "background_rate_per_gate": float,
    "gate_start_ns": float,
    "gate_ns": float,
    "spcm_jitter_ns": float,
    "tdc_bin_ns": float,
    "protection_sigma": float,
}
_EXPERIMENT_DEFAULTS = {"tau_g": 1.6, "n_pulses": 1_000_000}


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


_SECTIONS = {
    "experiment": _EXPERIMENT_KEYS,
    "settings": {"theta_over_quarter_pi": _floats, "loops": _ints, "phi": float},
    "analysis": {
        "bin_ns": float,
        "window_offset_ns": float,
        "window_span_ns": float,
        "tau_max_source": str,
    },
    "sweep": {
        "theta_over_quarter_pi": _floats,
        "tau_tilde": _floats,
        "loops": _ints,
        "fixed_product": float,
    },
}


@dataclass
class AnalysisOptions:
    bin_ns: float = DEFAULT_BIN_NS
    window_offset_ns: float = DEFAULT_WINDOW_OFFSET_NS
    window_span_ns: float = DEFAULT_WINDOW_SPAN_NS
    tau_max_source: str = "measured"


@dataclass
class RunConfig:
    experiment: dict = field(default_factory=lambda: dict(_EXPERIMENT_DEFAULTS))
    thetas: tuple = (0.0, 2.0)
    loops: tuple = tuple(range(1, 10))
    phi: float = 0.0
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    sweep: dict = field(default_factory=dict)

    def experiment_config(self, loops: int, seed: int | None = None) -> ExperimentConfig:
        params = dict(self.experiment)
        if seed is not None:
            params["seed"] = seed
        try:
            return ExperimentConfig.create(loops=loops, **params)
        except ZenoPMError as exc:
            raise ConfigError(f"[experiment] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", key=section)
        parsed = {}
        for key, value in cp.items(section):
            conv = _SECTIONS[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key '{key}' in [{section}]", key=f"{section}.{key}")
            try:
                parsed[key] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}' in [{section}]: {value!r}",
                                  key=f"{section}.{key}") from exc
        raw[section] = parsed

    rc = RunConfig()
    rc.experiment.update(raw.get("experiment", {}))
    settings = raw.get("settings", {})
    rc.thetas = settings.get("theta_over_quarter_pi", rc.thetas)
    rc.loops = settings.get("loops", rc.loops)
    rc.phi = settings.get("phi", rc.phi)
    rc.analysis = AnalysisOptions(**raw.get("analysis", {}))
    if rc.analysis.tau_max_source not in ("measured", "calibration"):
        raise ConfigError("tau_max_source must be 'measured' or 'calibration'",
                          key="analysis.tau_max_source")
    rc.sweep = raw.get("sweep", {})
    if any(l < 1 for l in rc.loops):
        raise ConfigError("loops must be positive", key="settings.loops")
    # validate every experiment field once, up front
    rc.experiment_config(rc.loops[0] if rc.loops else 1)
    return rc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", key="config")
    return parse_config(path.read_text())
