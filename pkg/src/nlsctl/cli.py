"""Command-line entry point: ``nlsctl {saturate,synthesize,limit,growth,evolve}``.

Every run writes ``manifest.json`` (resolved config, seed, version) next to
its results.  Exit codes: 0 success or positive verdict, 1 negative verdict
or unmet tolerance, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, ExperimentConfig, build_freqset, build_params, build_state,
                     build_trig, dump_json, load_config)
from .growth import NoiseModel, monte_carlo
from .saturation import density_check, is_saturating
from .solver import ControlSchedule, evolve
from .synthesis import (BandwidthUnreachable, KickPlan, NotSaturating, SpanDeficient, describe,
                        synthesize, verify_limit)

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _write(outdir: Path, name: str, text: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    path.write_text(text)
    return path


def _manifest(outdir: Path, cfg: ExperimentConfig) -> None:
    _write(outdir, "manifest.json", dump_json({
        "command": cfg.command, "config": cfg.to_dict(), "seed": cfg.seed,
        "version": __version__,
    }))


def _emit(obj) -> None:
    sys.stdout.write(dump_json(obj))


# -- subcommands -----------------------------------------------------------

def cmd_saturate(cfg: ExperimentConfig) -> int:
    b = cfg.block
    I = build_freqset(b["freqset"])
    report = is_saturating(I)
    dens = density_check(I, float(b["cutoff"]), int(b["max_level"]))
    out = {**report.to_dict(), **{k: v for k, v in dens.to_dict().items()}}
    outdir = Path(cfg.out)
    _write(outdir, "saturation.json", dump_json(out))
    _manifest(outdir, cfg)
    _emit(report.to_dict())
    return EXIT_OK if report.is_saturating else EXIT_NEGATIVE


def cmd_synthesize(cfg: ExperimentConfig) -> int:
    b = cfg.block
    I = build_freqset(b["freqset"])
    params = build_params(b, I)
    theta = build_trig(b["theta"], I.d)
    psi0 = build_state(b["psi0"], I.d, params.N)
    plan = KickPlan.from_dict(b["plan"]) if b.get("plan") else None
    out = Path(cfg.out)
    if out.suffix == ".json":
        outdir, sched_name = out.parent, out.name
    else:
        outdir, sched_name = out, "schedule.json"
    try:
        res = synthesize(psi0, theta, float(b["eps"]), params, plan, I=I, s=float(b["s"]),
                         max_level=int(b["max_level"]))
    except (NotSaturating, BandwidthUnreachable) as exc:
        _emit({"error": str(exc)})
        return EXIT_NEGATIVE
    except SpanDeficient as exc:
        raise ConfigError(str(exc)) from exc
    _write(outdir, sched_name, res.schedule.to_json(indent=2) + "\n")
    _write(outdir, "errors.csv", res.history_csv())
    _write(outdir, "plan.txt", describe(res.tree))
    _manifest(outdir, cfg)
    _emit({"T": res.T, "error": res.error, "converged": res.converged,
           "segments": len(res.schedule), "plan": res.plan.to_dict()})
    return EXIT_OK if res.converged else EXIT_NEGATIVE


def cmd_limit(cfg: ExperimentConfig) -> int:
    b = cfg.block
    I = build_freqset(b["freqset"])
    params = build_params(b, I)
    psi0 = build_state(b["psi0"], I.d, params.N)
    phi = build_trig(b["phi"], I.d)
    u = np.asarray(b["u"], dtype=float)
    if u.size != params.q:
        raise ConfigError(f"u needs {params.q} entries")
    try:
        res = verify_limit(psi0, phi, u, b["deltas"], params,
                           steps_per_delta=int(b["steps_per_delta"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    outdir = Path(cfg.out)
    _write(outdir, "limit.csv", res.to_csv())
    summary = {"rate": res.rate, "intercept": res.intercept,
               "flagged": [r.delta for r in res.rows if r.status != "completed"]}
    _write(outdir, "limit.json", dump_json(summary))
    _manifest(outdir, cfg)
    _emit(summary)
    return EXIT_OK


def _noise(spec: dict, q: int) -> NoiseModel:
    if "amplitudes" in spec:
        return NoiseModel.from_dict(spec)
    return NoiseModel.default(q, J_max=int(spec.get("J_max", 16)), decay=float(spec.get("decay", 1.5)),
                              scale=float(spec.get("scale", 1.0)), channels=spec.get("channels"),
                              law=spec.get("law", "normal"), cells=int(spec.get("cells", 200)))


def cmd_growth(cfg: ExperimentConfig) -> int:
    b = cfg.block
    I = build_freqset(b["freqset"])
    params = build_params(b, I)
    psi0 = build_state(b["psi0"], I.d, params.N)
    try:
        model = _noise(b["noise"], params.q)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise model: {exc}") from exc
    stats = monte_carlo(psi0, model, int(b["n_units"]), int(b["m_traj"]), b["M_levels"], params,
                        seed=cfg.seed, workers=cfg.workers)
    outdir = Path(cfg.out)
    _write(outdir, "trajectories.csv", stats.trajectories_csv())
    _write(outdir, "ensemble.csv", stats.ensemble_csv())
    summary = {**stats.summary(), "noise": model.to_dict()}
    _write(outdir, "growth.json", dump_json(summary))
    _manifest(outdir, cfg)
    _emit(stats.summary())
    return EXIT_OK


def cmd_evolve(cfg: ExperimentConfig) -> int:
    b = cfg.block
    I = build_freqset(b["freqset"])
    params = build_params(b, I)
    psi0 = build_state(b["psi0"], I.d, params.N)
    sched_spec = b["schedule"]
    if isinstance(sched_spec, str):
        sched_spec = _read_json(sched_spec)
    try:
        sched = ControlSchedule.from_list(sched_spec)
        traj = evolve(psi0, sched, params, store=b.get("store", "final"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad schedule: {exc}") from exc
    outdir = Path(cfg.out)
    _write(outdir, "trajectory.csv", traj.to_csv())
    _write(outdir, "final_state.json", dump_json(traj.final.to_dict()))
    summary = {"status": traj.status, "t_star": traj.t_star, "steps": traj.steps,
               "final_l2": float(traj.l2[-1]), "final_hs": float(traj.hs[-1]),
               "truncation_loss": traj.truncation_loss}
    _write(outdir, "evolve.json", dump_json(summary))
    _manifest(outdir, cfg)
    _emit(summary)
    return EXIT_OK if traj.completed else EXIT_NEGATIVE


COMMANDS = {
    "saturate": cmd_saturate,
    "synthesize": cmd_synthesize,
    "limit": cmd_limit,
    "growth": cmd_growth,
    "evolve": cmd_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlsctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)

    p = sub.add_parser("saturate", parents=[common], help="saturation report for a frequency set")
    p.add_argument("--freqset", help="JSON file with the frequency set")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--max-level", type=int)

    p = sub.add_parser("synthesize", parents=[common], help="synthesize a phase imprint schedule")
    p.add_argument("--theta", help="JSON file with the target phase")
    p.add_argument("--freqset", help="JSON file with the frequency set")
    p.add_argument("--eps", type=float)

    sub.add_parser("limit", parents=[common], help="small-time limit errors")

    p = sub.add_parser("growth", parents=[common], help="random forcing ensemble")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--units", type=int)

    p = sub.add_parser("evolve", parents=[common], help="integrate a schedule")
    p.add_argument("--schedule", help="JSON schedule file")
    return parser


def _overrides(args) -> dict:
    """Subcommand flags folded into the config block."""
    over = {}
    if getattr(args, "freqset", None):
        over["freqset"] = _read_json(args.freqset)
    if getattr(args, "theta", None):
        over["theta"] = _read_json(args.theta)
    for flag, key in (("cutoff", "cutoff"), ("max_level", "max_level"), ("eps", "eps"),
                      ("trajectories", "m_traj"), ("units", "n_units")):
        val = getattr(args, flag, None)
        if val is not None:
            over[key] = val
    if getattr(args, "schedule", None):
        over["schedule"] = args.schedule
    return over


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.command, args.config, seed=args.seed, out=args.out,
                          workers=args.workers)
        over = _overrides(args)
        if over:
            data = cfg.to_dict()
            data[cfg.command] = {**cfg.block, **over}
            cfg = ExperimentConfig.from_dict(data)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        sys.stderr.write(f"nlsctl: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
