"""``qetsim`` command line: analyze, transient, gate and sweep pipelines.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, digest, echo, load_config, sweep_values
from .dynamics import (SquareCurrent, basis_state, drive_profile, idle_splitting, optimize_gate_time,
                       run_iswap, run_z_gate, transient_z_drive, z_gate_time)
from .errors import ConfigError, NumericalError, ParameterError
from .magnetics import flux_units, loop_current_analytical
from .transient import (build_transient_system, counts_per_plateau, deviation_report, extract_plateaus,
                        integrate)
from .transmon import qubit_frequency, regime_check

log = logging.getLogger("qetsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("analyze", "transient", "gate", "sweep")
FLUX_FIELDS = ("delta_ipc_A", "delta_ipf_A", "phi_ec_Wb", "phi_ef_Wb", "r_c", "r_f", "r_cf",
               "K_c", "K_f", "K_12", "K_34", "F_H5")


def _flux_report(cfg: ExperimentConfig) -> dict:
    r = flux_units(cfg.qet_params())
    return {
        "delta_ipc_A": r.delta_ipc, "delta_ipf_A": r.delta_ipf,
        "phi_ec_Wb": r.phi_ec, "phi_ef_Wb": r.phi_ef,
        "r_c": r.r_c, "r_f": r.r_f, "r_cf": r.r_cf,
        "K_c": r.K_c, "K_f": r.K_f, "K_12": r.K_12, "K_34": r.K_34,
        "F_H5": r.F,
    }


def cmd_analyze(cfg: ExperimentConfig, **_) -> dict:
    """Flux-unit report and analytical loop currents for the configured counts."""
    p = cfg.qet_params()
    counts = cfg.block("analyze")["counts"]
    return {
        "flux_units": _flux_report(cfg),
        "currents": [{"n_c": c[0], "n_f": c[1], "i_p_A": loop_current_analytical(p, c)} for c in counts],
    }


def cmd_transient(cfg: ExperimentConfig, out: Path | None = None, rel_tol: float | None = None, **_) -> dict:
    """Integrate the QET circuit, extract plateaus and compare with the analytical levels."""
    p = cfg.qet_params()
    t = cfg.block("transient")
    system = build_transient_system(p, cfg.junction(), cfg.parasitics(), cfg.sources, t["source_resistance"])
    w = integrate(system, cfg.transient_config(rel_tol))
    if out is not None:
        w.to_csv(out / cfg.block("output")["waveform_csv"])
    summary: dict = {"flux_units": _flux_report(cfg), "steps": w.steps, "rejected_steps": w.rejected,
                     "samples": len(w)}
    if not cfg.sources:
        summary["plateaus"] = []
        summary["max_abs_i_p_A"] = float(np.max(np.abs(w.i_p)))
        return summary
    report = extract_plateaus(w, t["settle"])
    counts = counts_per_plateau(cfg.sources)
    dev = deviation_report(report, flux_units(p), counts)
    rise = [None] + [None if math.isnan(r) else r for r in report.rise_times]
    summary["plateaus"] = [
        {
            "n_c": c[0], "n_f": c[1],
            "start_s": pl.start, "end_s": pl.end,
            "i_p_A": pl.mean, "std_A": pl.std,
            "analytical_A": loop_current_analytical(p, c),
            "deviation": None if math.isnan(d) else float(d),
            "rise_time_s": r,
            "flagged": pl.flagged,
        }
        for pl, c, d, r in zip(report.plateaus, counts, dev, rise)
    ]
    summary["final_delta_rad"] = [float(x) for x in w.delta[-1]]
    return summary


def _psi(label: str | None, dim_levels: int, pair_levels: tuple | None = None) -> np.ndarray:
    if pair_levels is None:
        label = label or "plus"
        if label in ("0", "1"):
            return basis_state(dim_levels, int(label))
        psi = np.zeros(dim_levels, dtype=complex)
        psi[0], psi[1] = 1, (1 if label == "plus" else -1)
        return psi / math.sqrt(2)
    label = label or "01"
    l1, l2 = pair_levels
    return basis_state(l1 * l2, int(label[0]) * l2 + int(label[1]))


def _amplitudes(psi) -> list:
    return [[float(a.real), float(a.imag)] for a in psi]


def _regime(p, i_z) -> dict:
    r = regime_check(p, i_z)
    return {"ratio": r.ratio, "classification": r.classification}


def cmd_gate(cfg: ExperimentConfig, rel_tol: float | None = None, **_) -> dict:
    """Solve or optimise the gate time, run the gate and report fidelity."""
    if not cfg.has("transmon"):
        raise ConfigError("missing transmon block")
    g = cfg.require("gate")
    if g["type"] == "z":
        return _gate_z(cfg, g, rel_tol)
    if not cfg.has("transmon2"):
        raise ConfigError("missing transmon2 block (iswap needs two qubits)")
    if g["g"] is None:
        raise ConfigError("gate.g: missing coupling strength for iswap")
    return _gate_iswap(cfg, g)


def _gate_z(cfg, g, rel_tol):
    p = cfg.transmon()
    psi0 = _psi(g["psi0"], p.levels)
    t_s = g["t_start"]
    out: dict = {"type": "z", "profile": g["profile"], "phi_target_rad": g["phi_target"],
                 "idle_frequency_rad_per_s": float(qubit_frequency(p, p.i_idle))}
    if g["profile"] == "transient":
        if g["timing"] != "auto":
            raise ConfigError("gate.timing: the transient profile solves its own gate time; use \"auto\"")
        tcfg = cfg.transient_config(rel_tol)
        profile, t_z, i_w = transient_z_drive(
            cfg.qet_params(), p, g["phi_target"], t_s, cfg.junction(), cfg.parasitics(),
            source_resistance=cfg.block("transient")["source_resistance"], cfg=tcfg,
        )
    else:
        i_w = g["i_work"]
        if i_w is None:
            if not cfg.has("qet"):
                raise ConfigError("gate.i_work: required when no qet block defines the flux unit")
            i_w = flux_units(cfg.qet_params()).delta_ipc
        t_z = z_gate_time(p, i_w, 0.0, g["phi_target"]) if g["timing"] == "auto" else g["timing"]
        profile = drive_profile(p, SquareCurrent(0.0, i_w, t_s, t_s + t_z, t_s + t_z))
    res = run_z_gate(p, profile, psi0, g["phi_target"])
    out.update({
        "i_work_A": i_w,
        "working_frequency_rad_per_s": float(qubit_frequency(p, p.i_idle + i_w)),
        "regime_working": _regime(p, p.i_idle + i_w),
        "t_z_s": t_z, "phase_rad": res.phase, "fidelity": res.fidelity,
        "leakage": res.leakage, "norm_drift": res.norm_drift,
        "end_state": _amplitudes(res.state),
    })
    return out


def _gate_iswap(cfg, g):
    p1, p2 = cfg.transmon("transmon"), cfg.transmon("transmon2")
    psi0 = _psi(g["psi0"], 0, (p1.levels, p2.levels))
    kw = dict(t_s=g["t_start"], phase_corrected=g["phase_corrected"], method=g["method"], dt_max=g["dt_max"])

    def run(t):
        return run_iswap(p1, p2, g["g"], t, psi0, **kw)

    if g["timing"] == "auto":
        t_z, _ = optimize_gate_time(lambda t: run(t).fidelity, g["bracket"], g["tol_t"])
    else:
        t_z = g["timing"]
    res = run(t_z)
    return {
        "type": "iswap", "g_rad_per_s": g["g"], "phase_corrected": g["phase_corrected"],
        "detuning_rad_per_s": -idle_splitting(p1, p2),
        "t_z_s": t_z, "fidelity": res.fidelity,
        "modulus_fidelity": run_iswap(p1, p2, g["g"], t_z, psi0, **{**kw, "phase_corrected": False}).fidelity,
        "phase_rad": res.phase, "leakage": res.leakage, "norm_drift": res.norm_drift,
        "end_state": _amplitudes(res.state),
    }


def _sweep_point(args):
    cfg, path, value, with_gate = args
    point = cfg.with_value(path, value)
    row = {"index": None, "parameter": path, "value": value}
    row.update(_flux_report(point))
    if with_gate:
        gate = cmd_gate(point)
        row.update({"t_z_s": gate["t_z_s"], "fidelity": gate["fidelity"]})
    return row


def cmd_sweep(cfg: ExperimentConfig, out: Path | None = None, jobs: int = 1, **_) -> dict:
    """Evaluate the flux-unit report (and optionally a gate) on a parameter grid."""
    s = cfg.require("sweep")
    values = sweep_values(s)
    tasks = [(cfg, s["parameter"], v, s["gate"]) for v in values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    for k, row in enumerate(rows):
        row["index"] = k
    text = sweep_csv(rows)
    if out is not None:
        (out / cfg.block("output")["sweep_csv"]).write_text(text, encoding="utf-8")
    return {"parameter": s["parameter"], "points": len(rows), "rows": rows}


def sweep_csv(rows: list) -> str:
    cols = ["index", "parameter", "value", *FLUX_FIELDS]
    if rows and "fidelity" in rows[0]:
        cols += ["t_z_s", "fidelity"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([format(row[c], ".17g") if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()


HANDLERS = {"analyze": cmd_analyze, "transient": cmd_transient, "gate": cmd_gate, "sweep": cmd_sweep}


def run_command(command: str, cfg: ExperimentConfig, out: Path | None = None, jobs: int = 1,
                rel_tol: float | None = None, seed: int | None = None) -> dict:
    """Run one pipeline and return the deterministic summary dictionary."""
    result = HANDLERS[command](cfg, out=out, jobs=jobs, rel_tol=rel_tol)
    resolved = echo(cfg)
    if rel_tol is not None:
        resolved.setdefault("transient", {})["rel_tol"] = rel_tol
    return {
        "command": command,
        "version": __version__,
        "config_digest": digest(cfg),
        "seed": seed,
        "resolved_config": resolved,
        "result": result,
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qetsim", description="SFQ-driven qubit energy tuner simulator")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment configuration")
    ap.add_argument("--out", help="output directory (default: $QETSIM_OUT, else no files written)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    ap.add_argument("--rel-tol", type=float, help="override transient.rel_tol")
    ap.add_argument("--seed", type=int, help="reserved for randomized helpers; echoed in the summary")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.rel_tol is not None and not args.rel_tol > 0:
            raise ConfigError("--rel-tol must be > 0")
        cfg = load_config(args.config)
        out_dir = args.out or os.environ.get("QETSIM_OUT") or cfg.block("output")["dir"]
        out = Path(out_dir) if out_dir else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        summary = run_command(args.command, cfg, out, args.jobs, args.rel_tol, args.seed)
        wall = time.perf_counter() - t0
        text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
        if out is not None:
            name = cfg.block("output")["summary"]
            (out / name).write_text(text, encoding="utf-8")
            meta = {"version": __version__, "command": args.command, "wall_clock_s": wall}
            (out / (Path(name).stem + ".meta.json")).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        sys.stdout.write(text)
        return EXIT_OK
    except (ConfigError, ParameterError) as exc:
        print(f"qetsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"qetsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"qetsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
