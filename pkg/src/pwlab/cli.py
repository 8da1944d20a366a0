"""Command-line entry point.

    pwlab run <scenario> --config FILE [--seed S] [--out DIR]
    pwlab validate --config FILE
    pwlab oracle torus --x0 ... --n ... --lengths ... --t T

Exit codes: 0 success, 2 config/usage error, 3 numerical-validity failure
(e.g. measurement branches not separated by the end time). Every run writes a
manifest.json (also on failure), a summary.json, and the per-scenario CSV
outputs. Runs are byte-reproducible for a given config and seed.
"""

from __future__ import annotations

import os

# Worker-parallelism cap; must land in the environment before numpy spins up
# its threaded backends, hence before the heavy imports below.
_threads = os.environ.get("PWLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SCENARIOS, load_config, preset_path
from .ergodic import torus_flow_exact
from .scenarios.common import write_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVALID = 3


def _fail(kind: str, detail: str) -> None:
    print(f'error={kind} detail="{detail}"', file=sys.stderr)


def _resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    return preset_path(arg)


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def emit_summary(results: dict | None, out_dir: Path | None = None) -> dict:
    """Summarize a run as one JSON object plus a readable table on stdout."""
    if not results:
        summary = {"status": "no_data"}
    else:
        summary = dict(results)
        summary.setdefault("status", "ok")
    if out_dir is not None:
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    width = max((len(k) for k in summary), default=10)
    for key in sorted(summary):
        val = summary[key]
        if isinstance(val, float):
            val = f"{val:.6g}"
        print(f"  {key:<{width}}  {val}")
    return summary


# ---------------------------------------------------------------------------
# scenario dispatch
# ---------------------------------------------------------------------------

def _run_torus(cfg, out: Path) -> tuple[dict, list[str], bool]:
    from .scenarios.torus import run_torus
    res = run_torus(cfg)
    files = []
    for i, box in enumerate(res.boxes):
        fname = f"occupancy_box{i}.csv"
        _write_csv(out / fname, "T,ratio,target,abs_error", box.series)
        files.append(fname)
    return res.summary(), files, True


def _run_measurement(cfg, out: Path) -> tuple[dict, list[str], bool]:
    from .scenarios.measurement import run_measurement
    rec = run_measurement(cfg)
    freqs = rec.frequencies()
    summary = {
        "frequencies": freqs,
        "targets": {lab: float(w) for lab, w in zip(rec.labels, rec.target_weights)},
        "final_overlap": rec.extras["final_overlap"],
        "node_freeze_events": rec.freeze_events,
        "status": "ok" if rec.valid else "invalid",
    }
    if not rec.valid:
        summary["invalid_reason"] = rec.invalid_reason
    _write_csv(out / "outcomes.csv", "traj_id,outcome",
               list(enumerate(int(o) for o in rec.outcomes)))
    return summary, ["outcomes.csv"], rec.valid


def _run_stern_gerlach(cfg, out: Path) -> tuple[dict, list[str], bool]:
    from .scenarios.stern_gerlach import run_stern_gerlach
    res = run_stern_gerlach(cfg)
    freqs = res.frequencies_up()
    summary = {
        "frequency_up_per_prior": dict(zip(res.priors, freqs)),
        "target_up": float(abs(cfg.c_up) ** 2),
        "final_overlap": res.records[0].extras["final_overlap"],
        "x_independence_identical": res.x_independence_identical,
        "node_freeze_events": sum(r.freeze_events for r in res.records),
        "status": "ok" if res.valid else "invalid",
    }
    if not res.valid:
        summary["invalid_reason"] = res.records[0].invalid_reason
    rows = [(p, repr(f)) for p, f in zip(res.priors, freqs)]
    with open(out / "frequencies.csv", "w") as fh:
        fh.write("prior,frequency_up\n")
        for p, f in rows:
            fh.write(f"{p},{f}\n")
    return summary, ["frequencies.csv"], res.valid


def _run_two_slit(cfg, out: Path) -> tuple[dict, list[str], bool]:
    from .scenarios.two_slit import run_two_slit
    res = run_two_slit(cfg)
    centers = 0.5 * (res.bin_edges[:-1] + res.bin_edges[1:])
    _write_csv(out / "screen_histogram.csv", "x2,arrival_mass,flux_mass",
               list(zip(centers, res.arrival_hist, res.flux_hist)))
    files = ["screen_histogram.csv"]
    return res.summary(), files, res.valid


def _run_kicked(cfg, out: Path) -> tuple[dict, list[str], bool]:
    from .scenarios.kicked import run_kicked_relaxation
    res = run_kicked_relaxation(cfg)
    _write_csv(out / "relaxation.csv", "kick,entropy,tv",
               list(zip(res.kick_index,
                        (float(s) for s in res.entropy_series),
                        (float(t) for t in res.tv_series))))
    return res.summary(), ["relaxation.csv"], True


_RUNNERS = {
    "torus": _run_torus,
    "measurement": _run_measurement,
    "stern_gerlach": _run_stern_gerlach,
    "two_slit": _run_two_slit,
    "kicked_relaxation": _run_kicked,
}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    try:
        cfg_path = _resolve_config(args.config)
        scenario, seed, cfg = load_config(cfg_path)
    except ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    if args.scenario != scenario:
        _fail("config", f"config file is for scenario {scenario!r}, not {args.scenario!r}")
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
        seed = args.seed
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lock = out / ".pwlab.lock"
        lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        _fail("lock", f"output directory {out} is in use (stale {lock}?)")
        return EXIT_CONFIG
    except OSError as exc:
        _fail("output", f"cannot use output directory {out}: {exc}")
        return EXIT_CONFIG

    started = time.time()
    payload = {"scenario": scenario, "seed": seed, "config": str(cfg)}
    status, code = "failed", EXIT_INVALID
    summary, files = None, []
    try:
        summary, files, valid = _RUNNERS[scenario](cfg, out)
        status = "ok" if valid else "invalid"
        code = EXIT_OK if valid else EXIT_INVALID
    finally:
        os.close(lock_fd)
        lock.unlink(missing_ok=True)
        write_manifest(out / "manifest.json", scenario=scenario, seed=seed,
                       payload=payload, files=files + ["summary.json"],
                       status=status, started=started)
        emit_summary(summary, out)
    return code


def _cmd_validate(args) -> int:
    try:
        cfg_path = _resolve_config(args.config)
        scenario, seed, _cfg = load_config(cfg_path)
    except ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    print(f"ok scenario={scenario} seed={seed}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.kind != "torus":
        _fail("usage", f"unknown oracle {args.kind!r}")
        return EXIT_CONFIG
    x0 = [float(t) for t in args.x0.split(",")]
    ns = [int(t) for t in args.n.split(",")]
    lengths = [float(t) for t in args.lengths.split(",")]
    if not (len(x0) == len(ns) == len(lengths)):
        _fail("usage", "x0, n and lengths must have matching dimension")
        return EXIT_CONFIG
    pos = torus_flow_exact(x0, ns, lengths, args.t, masses=args.mass, hbar=args.hbar)
    print(",".join(repr(float(x)) for x in np.atleast_1d(pos)))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pwlab",
                                     description="pilot-wave trajectory laboratory")
    parser.add_argument("--version", action="version", version=f"pwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a config file")
    p_run.add_argument("scenario", choices=SCENARIOS)
    p_run.add_argument("--config", required=True,
                       help="config file path or shipped preset name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="pwlab_out")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_or = sub.add_parser("oracle", help="closed-form cross-check evaluations")
    p_or.add_argument("kind", choices=["torus"])
    p_or.add_argument("--x0", required=True)
    p_or.add_argument("--n", required=True)
    p_or.add_argument("--lengths", required=True)
    p_or.add_argument("--t", type=float, required=True)
    p_or.add_argument("--mass", type=float, default=1.0)
    p_or.add_argument("--hbar", type=float, default=1.0)
    p_or.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
