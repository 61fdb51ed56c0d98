"""Command-line experiment runner.

    optlyap --config run.cfg [--seed N] [--output PATH] [--format csv|json]

Writes one trajectory or ensemble-summary file plus ``<output>.manifest.json``
holding every resolved setting and the seed.
"""
import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import cooling, threelevel
from .config import parse_config
from .designs import ControlDesign
from .dynamics import IntegratorConfig, run_trajectory
from .errors import ConfigError, OptLyapError
from .output import emit_trajectory, write_manifest, write_table


def _thin(traj, every):
    if every == 1:
        return traj
    keep = np.zeros(len(traj), dtype=bool)
    keep[::every] = True
    keep[-1] = True
    on = traj.last_switched_on()
    if on is not None:
        keep[on] = True
    return dataclasses.replace(
        traj, **{f: getattr(traj, f)[keep] for f in ("t", "fields", "V", "W", "metric", "switched_on", "vdot")}
    )


def _three_level(cfg):
    problem = threelevel.build_three_level()
    if cfg.params["initial_state"] == "random":
        rho0 = threelevel.random_states(cfg.seed, 1)[0]
    else:
        rho0 = threelevel.uniform_superposition()
    traj = run_trajectory(problem, cfg.design, rho0, cfg=cfg.integrator,
                          run_past_stop=cfg.params["run_past_stop"])
    emit_trajectory(_thin(traj, cfg.record_every), cfg.output_format, cfg.output_path)
    last = traj.last_switched_on()
    return {"stop_time": traj.stop_time,
            "fidelity_at_stop": None if last is None else float(traj.metric[last])}


def _cooling(cfg):
    params = cfg.cooling_params()
    traj = cooling.run_cooling(params, cfg.design.law, cfg.integrator,
                               run_past_stop=cfg.params["run_past_stop"])
    emit_trajectory(_thin(traj, cfg.record_every), cfg.output_format, cfg.output_path)
    freq = None
    if np.count_nonzero(traj.switched_on) >= 64:
        freq = cooling.dominant_modulation_frequency(traj)
    return {"stop_time": traj.stop_time, "max_abs_g": float(np.max(np.abs(traj.fields))),
            "final_phonons": float(traj.metric[-1]), "dominant_modulation_frequency": freq}


def _convergence(cfg):
    res = threelevel.convergence_ensemble(cfg.design, cfg.params["n_states"], cfg.integrator,
                                          cfg.seed, record_every=cfg.record_every)
    d = res.distances
    rows = [[float(t), float(m), float(lo), float(hi)]
            for t, m, lo, hi in zip(res.t, d.mean(axis=1), d.min(axis=1), d.max(axis=1))]
    write_table(["t", "mean_D", "min_D", "max_D"], rows, cfg.output_path, cfg.output_format,
                {"seed": cfg.seed, "n_states": cfg.params["n_states"]})
    return {"stop_times": res.stop_times, "time_to_epsilon": res.first_passage(cfg.design.epsilon)}


def _robustness(cfg):
    p = cfg.params
    if cfg.experiment == "robustness-h0":
        grid = p["deltas"]
        variants = [threelevel.Variant(perturbation=threelevel.PerturbationSpec(p["generator"], dlt))
                    for dlt in grid]
        columns = ["generator", "delta", "mean_fidelity", "stderr", "n_states"]
        lead = [[p["generator"], float(dlt)] for dlt in grid]
        substeps = 1
    else:
        grid = p["gammas"]
        variants = [threelevel.Variant(channels=tuple(threelevel.emission_channels(g, g))) for g in grid]
        columns = ["gamma", "mean_fidelity", "stderr", "n_states"]
        lead = [[float(g)] for g in grid]
        substeps = p["lindblad_substeps"]
    results = threelevel.fidelity_sweep(cfg.design, variants, p["n_states"], cfg.integrator,
                                        cfg.seed, lindblad_substeps=substeps)
    rows = [head + [r.mean_fidelity, r.stderr, r.n_states] for head, r in zip(lead, results)]
    write_table(columns, rows, cfg.output_path, cfg.output_format,
                {"seed": cfg.seed, "n_states": p["n_states"]})
    return {"mean_fidelity": [r.mean_fidelity for r in results],
            "nominal_stop_times": results[0].stop_times}


_RUNNERS = {
    "three-level": _three_level,
    "cooling": _cooling,
    "convergence-ensemble": _convergence,
    "robustness-h0": _robustness,
    "robustness-decoherence": _robustness,
}


def manifest_path(output_path):
    return str(output_path) + ".manifest.json"


def run_experiment(cfg):
    """Run one configured experiment, write its artifacts and return 0."""
    if cfg.output_path is None:
        cfg.output_path = f"{cfg.experiment}.{cfg.output_format}"
    Path(cfg.output_path).parent.mkdir(parents=True, exist_ok=True)
    results = _RUNNERS[cfg.experiment](cfg)
    write_manifest(manifest_path(cfg.output_path), cfg.resolved(), results, __version__)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="optlyap", description="Run an optimal Lyapunov control experiment.")
    ap.add_argument("--config", required=True, help="experiment configuration file")
    ap.add_argument("--seed", type=int, help="override the configured RNG seed")
    ap.add_argument("--output", help="override the output path")
    ap.add_argument("--format", choices=["csv", "json"], help="override the output format")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"optlyap: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.output:
            cfg.output_path = args.output
        if args.format:
            cfg.output_format = args.format
        return run_experiment(cfg)
    except (OptLyapError, OSError) as exc:
        print(f"optlyap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
