"""Command-line driver.

    zenopm table1|exact|simulate|analyze|sweep|table2 --config PATH --out DIR [--seed N]

Exit codes: 0 success, 2 validation error, 3 golden mismatch, 4 pipeline/data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
import zlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import RunConfig, load_config
from .errors import ConfigError, PairingError, ZenoPMError
from .montecarlo import TimeTagDataset, simulate_background_run, simulate_signal_run
from .polarization import make_state
from .zeno import ZenoConfig, reproduce_table1, run_protective_measurement, table1_csv

log = logging.getLogger("zenopm")

EXIT_OK, EXIT_VALIDATION, EXIT_GOLDEN, EXIT_PIPELINE = 0, 2, 3, 4
COMMANDS = ("table1", "exact", "simulate", "analyze", "sweep", "table2")
GOLDEN_TOL = 0.0015
FAST_AXIS = 2.0  # theta = pi/2, pure V
SLOW_AXIS = 0.0  # theta = 0, pure H
# <O> of the five eight-loop reference settings
TABLE2_EXPECTATIONS = (-1.0, -0.45, 0.07, 0.57, 1.0)
TABLE2_LOOPS = 8
# used when table2 runs without --config: lossless loops, enough pulses for ~1e5
# detections per setting, light flat background, window clear of the signal tail
TABLE2_EXPERIMENT = {"tau_g": 1.6, "n_pulses": 1_300_000, "loss_db_per_loop": 0.0,
                     "background_rate_per_gate": 0.01}
TABLE2_WINDOW_OFFSET_NS = 4.0


@dataclass
class RunManifest:
    config_path: Path | None
    command: str
    output_dir: Path
    seed_override: int | None = None
    golden_path: Path | None = None
    tau_tilde_grid: tuple = ()

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", key="command")
        self.output_dir = Path(self.output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}", key="out") from exc

    def load(self) -> RunConfig:
        rc = load_config(self.config_path) if self.config_path else RunConfig()
        if self.seed_override is not None:
            rc.experiment["seed"] = self.seed_override
        return rc


def substream_seed(base: int, name: str) -> int:
    """64-bit seed for the named substream ``name`` of ``base``."""
    ss = np.random.SeedSequence(base, spawn_key=(zlib.crc32(name.encode()),))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def setting_name(theta_q: float) -> str:
    return f"th{theta_q:g}"


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- table1

def _load_golden(path: Path | None) -> list[dict]:
    if path is None:
        text = resources.files("zenopm.data").joinpath("table1_golden.csv").read_text()
    else:
        text = Path(path).read_text()
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def compare_table1(rows: list[dict], golden: list[dict], tol: float = GOLDEN_TOL) -> list[dict]:
    out = []
    for g in golden:
        match = [r for r in rows if abs(r["theta_over_quarter_pi"] - g["theta_over_quarter_pi"]) < 1e-9
                 and abs(r["tau_tilde"] - g["tau_tilde"]) < 1e-9 and r["loops"] == int(g["loops"])]
        if not match:
            out.append({**g, "ok": False, "missing": True})
            continue
        r = match[0]
        ds = r["survival"] - g["survival"]
        dr = r["rescaled_shift"] - g["rescaled_shift"]
        out.append({**g, "survival_sim": r["survival"], "shift_sim": r["rescaled_shift"],
                    "d_survival": ds, "d_shift": dr, "ok": abs(ds) <= tol and abs(dr) <= tol})
    return out


def cmd_table1(m: RunManifest) -> int:
    extra = tuple((tt, max(1, round(1 / tt))) for tt in m.tau_tilde_grid)
    rows = reproduce_table1(extra)
    (m.output_dir / "table1.csv").write_text(table1_csv(rows))
    diff = compare_table1(rows, _load_golden(m.golden_path))
    lines = ["theta/(pi/4) tau~ loops |  P(gold)   P(sim)   dP     | shift(gold)  shift(sim) dshift | ok"]
    for d in diff:
        if d.get("missing"):
            lines.append(f"{d['theta_over_quarter_pi']:g} {d['tau_tilde']:g} {int(d['loops'])}: missing row")
            continue
        lines.append(
            f"{d['theta_over_quarter_pi']:>5g} {d['tau_tilde']:>5g} {int(d['loops']):>3d}   | "
            f"{d['survival']:.3f}  {d['survival_sim']:.4f} {d['d_survival']:+.4f} | "
            f"{d['rescaled_shift']:+.3f}      {d['shift_sim']:+.4f}   {d['d_shift']:+.4f} | "
            f"{'yes' if d['ok'] else 'NO'}"
        )
    n_ok = sum(d["ok"] for d in diff)
    lines.append(f"{n_ok}/{len(diff)} rows within +/-{GOLDEN_TOL}")
    report = "\n".join(lines) + "\n"
    (m.output_dir / "table1_diff.txt").write_text(report)
    print(report, end="")
    return EXIT_OK if n_ok == len(diff) else EXIT_GOLDEN


# ---------------------------------------------------------------- exact / sweep

def cmd_exact(m: RunManifest) -> int:
    rc = m.load()
    rows = []
    for loops in rc.loops:
        cfg = rc.experiment_config(loops)
        for f in rc.thetas:
            psi0 = make_state(f * np.pi / 4, rc.phi)
            res = run_protective_measurement(psi0, cfg.zeno, cfg.tau_g)
            rows.append((f"{f:g}", loops, f"{cfg.zeno.tau_tilde:.6g}", f"{res.survival:.9f}",
                         f"{res.mean_shift * cfg.tau_g:.9f}", f"{res.rescaled_shift:.9f}",
                         f"{res.width * cfg.tau_g:.9f}", f"{np.cos(2 * f * np.pi / 4):.9f}"))
            t = np.arange(-6.0, 6.0 + 1e-9, 0.02)
            dens = np.abs(res.pointer.amplitude(t / cfg.tau_g)) ** 2 / cfg.tau_g
            (m.output_dir / f"exact_density_{setting_name(f)}_l{loops}.csv").write_text(
                an.series_csv(t, dens))
    _write_csv(m.output_dir / "exact.csv",
               ("theta_over_quarter_pi", "loops", "tau_tilde", "survival", "mean_shift_ns",
                "rescaled_shift", "width_ns", "expectation"), rows)
    return EXIT_OK


def sweep_rows(sweep: dict) -> list[tuple]:
    thetas = sweep.get("theta_over_quarter_pi", tuple(np.linspace(0, 2, 20)))
    loops_list = sweep.get("loops", (2, 5, 10, 20, 50))
    if "fixed_product" in sweep:
        grid = [(sweep["fixed_product"] / l, l) for l in loops_list]
    else:
        grid = [(tt, l) for tt in sweep.get("tau_tilde", (0.1,)) for l in loops_list]
    rows = []
    for f in thetas:
        psi0 = make_state(f * np.pi / 4)
        for tt, l in grid:
            res = run_protective_measurement(psi0, ZenoConfig(tt, l))
            rows.append((f, tt, l, res.survival, res.rescaled_shift))
    return rows


def cmd_sweep(m: RunManifest) -> int:
    rc = m.load()
    rows = sweep_rows(rc.sweep)
    _write_csv(m.output_dir / "sweep.csv",
               ("theta_over_quarter_pi", "tau_tilde", "loops", "survival", "rescaled_shift"),
               [(f"{f:.9g}", f"{tt:.9g}", l, f"{s:.12f}", f"{r:.12f}") for f, tt, l, s, r in rows])
    return EXIT_OK


# ---------------------------------------------------------------- simulate / analyze

def simulate_settings(rc: RunConfig, out: Path, thetas, loops_list) -> list[Path]:
    base_seed = int(rc.experiment.get("seed", 0))
    written = []
    for loops in loops_list:
        for f in thetas:
            name = f"{setting_name(f)}_l{loops}"
            cfg = rc.experiment_config(loops, seed=substream_seed(base_seed, name))
            psi0 = make_state(f * np.pi / 4, rc.phi)
            sig = simulate_signal_run(cfg, psi0)
            sig.meta["setting"]["theta_over_quarter_pi"] = f
            bg = simulate_background_run(cfg)
            bg.meta["setting"] = {"theta_over_quarter_pi": f}
            written.append(sig.write(out / f"signal_{name}.csv"))
            written.append(bg.write(out / f"background_{name}.csv"))
            log.info("simulated %s: %d signal-run events, %d background events", name, len(sig), len(bg))
    return written


def cmd_simulate(m: RunManifest) -> int:
    rc = m.load()
    simulate_settings(rc, m.output_dir, rc.thetas, rc.loops)
    return EXIT_OK


_NAME_RE = re.compile(r"^signal_th(?P<theta>[-0-9.e+]+)_l(?P<loops>\d+)\.csv$")


def discover_runs(data_dir: Path) -> dict[int, dict[float, tuple[Path, Path]]]:
    runs: dict[int, dict[float, tuple[Path, Path]]] = {}
    for p in sorted(data_dir.glob("signal_*.csv")):
        mt = _NAME_RE.match(p.name)
        if not mt:
            continue
        bg = p.with_name("background_" + p.name[len("signal_"):])
        if not bg.exists():
            raise PairingError(f"no background dataset paired with {p.name}")
        runs.setdefault(int(mt["loops"]), {})[float(mt["theta"])] = (p, bg)
    for p in sorted(data_dir.glob("background_*.csv")):
        if not p.with_name("signal_" + p.name[len("background_"):]).exists():
            raise PairingError(f"background dataset {p.name} has no signal partner")
    return runs


def analyze_dir(data_dir: Path, out: Path, opts) -> dict:
    runs = discover_runs(data_dir)
    if not runs:
        raise PairingError(f"no signal datasets in {data_dir}")
    pipe = {}
    for loops, by_theta in runs.items():
        for f, (sp, bp) in by_theta.items():
            name = f"{setting_name(f)}_l{loops}"
            sig, bg = TimeTagDataset.read(sp), TimeTagDataset.read(bp)
            try:
                pipe[(loops, f)] = an.run_pipeline(
                    sig, bg if len(bg) else None, bin_ns=opts.bin_ns,
                    window_offset_ns=opts.window_offset_ns, window_span_ns=opts.window_span_ns)
            except ZenoPMError as exc:
                raise type(exc)(f"setting {name}: {exc}") from exc

    points = []
    for loops in sorted(runs):
        if (loops, FAST_AXIS) in pipe and (loops, SLOW_AXIS) in pipe:
            points.append((loops, pipe[(loops, SLOW_AXIS)].mean - pipe[(loops, FAST_AXIS)].mean))
    calib = an.fit_calibration(points) if len(points) >= 2 else None
    _write_json(out / "calibration.json", None if calib is None else {
        "slope_ns_per_loop": calib.slope, "slope_uncertainty": calib.slope_uncertainty,
        "points": [list(p) for p in calib.points]})

    reports = []
    for (loops, f), res in sorted(pipe.items()):
        if (loops, FAST_AXIS) not in pipe:
            continue
        fast_mean = pipe[(loops, FAST_AXIS)].mean
        if opts.tau_max_source == "calibration" and calib is not None:
            tau_max = calib.tau_max(loops)
        elif (loops, SLOW_AXIS) in pipe:
            tau_max = pipe[(loops, SLOW_AXIS)].mean - fast_mean
        elif calib is not None:
            tau_max = calib.tau_max(loops)
        else:
            continue
        rep = an.compute_report(res.distribution, fast_mean, tau_max, res.n_detected)
        name = f"{setting_name(f)}_l{loops}"
        reports.append({"setting": name, "theta_over_quarter_pi": f, "loops": loops,
                        "cos_2theta": float(np.cos(f * np.pi / 2)), **rep.to_dict()})
        d = res.distribution
        (out / f"dist_{name}.csv").write_text(an.series_csv(d.bin_centers - fast_mean, d.probabilities))
    _write_json(out / "reports.json", reports)
    return {"calibration": calib, "reports": reports}


def cmd_analyze(m: RunManifest) -> int:
    rc = m.load()
    analyze_dir(m.output_dir, m.output_dir, rc.analysis)
    return EXIT_OK


def table2_thetas() -> tuple[float, ...]:
    """theta/(pi/4) for the five reference settings, from <O> = cos(2 theta)."""
    return tuple(float(np.arccos(o) / 2 / (np.pi / 4)) for o in TABLE2_EXPECTATIONS)


def table2_run_config(seed: int | None = None) -> RunConfig:
    rc = RunConfig()
    rc.experiment.update(TABLE2_EXPERIMENT)
    if seed is not None:
        rc.experiment["seed"] = seed
    rc.analysis.window_offset_ns = TABLE2_WINDOW_OFFSET_NS
    return rc


def cmd_table2(m: RunManifest) -> int:
    rc = m.load() if m.config_path else table2_run_config(m.seed_override)
    thetas = table2_thetas()
    simulate_settings(rc, m.output_dir, thetas, (TABLE2_LOOPS,))
    result = analyze_dir(m.output_dir, m.output_dir, rc.analysis)
    labels = "abcde"
    rows = []
    for lab, f in zip(labels, thetas):
        name = f"{setting_name(f)}_l{TABLE2_LOOPS}"
        rep = next(r for r in result["reports"] if r["setting"] == name)
        rows.append((lab, f"{f:.6f}", f"{rep['tau']:.4f}", f"{rep['tau_std']:.4f}",
                     f"{rep['expectation']:.4f}", f"{rep['sigma_pm']:.4f}", f"{rep['sigma_sm']:.4f}",
                     f"{rep['ratio']:.4f}", rep["n_detected"], f"{rep['cos_2theta']:.4f}"))
    _write_csv(m.output_dir / "table2.csv",
               ("distribution", "theta_over_quarter_pi", "tau_ns", "tau_std_ns", "expectation",
                "sigma_pm", "sigma_sm", "ratio", "n_detected", "cos_2theta"), rows)
    for r in rows:
        print("  ".join(str(x) for x in r))
    return EXIT_OK


_DISPATCH = {"table1": cmd_table1, "exact": cmd_exact, "simulate": cmd_simulate,
             "analyze": cmd_analyze, "sweep": cmd_sweep, "table2": cmd_table2}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zenopm", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="run configuration (key = value, [section])")
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    ap.add_argument("--seed", type=int, help="override [experiment] seed")
    ap.add_argument("--golden", type=Path, help="table1: golden CSV to compare against")
    ap.add_argument("--tau-tilde-grid", type=lambda s: tuple(float(x) for x in s.split(",")),
                    default=(), help="table1: extra comma-separated tau~ values (loops = 1/tau~)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "simulate" and args.config is None:
            raise ConfigError(f"{args.command} requires --config", key="config")
        manifest = RunManifest(args.config, args.command, args.out, args.seed,
                               args.golden, args.tau_tilde_grid)
        return _DISPATCH[args.command](manifest)
    except ConfigError as exc:
        print(f"zenopm: configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ZenoPMError, OSError, ValueError) as exc:
        print(f"zenopm: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
