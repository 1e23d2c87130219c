"""``dyndbm simulate|train|sample|analyze``: one config file drives every step."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .closure import ObservableSpec, closure_terms, data_derivative, ensemble_mean, sample_model, smooth
from .dbm import conditional_probs
from .dynamics import integrate_forward, write_csv
from .io import RunConfig, load_checkpoint, load_config, save_checkpoint
from .lattice_sim import load_dataset, mean_counts, run_ensemble, save_dataset
from .trainer import train

log = logging.getLogger("dyndbm")


def simulate_command(cfg: RunConfig, out: Path) -> Path:
    ds = run_ensemble(cfg.simulation)
    data_dir = out / "data"
    save_dataset(ds, data_dir)
    means = mean_counts(ds)
    times = np.arange(ds.n_times) * cfg.simulation.dt
    write_csv(out / "mean_counts.csv", ["t", *means], np.column_stack([times, *means.values()]))
    log.info("wrote %d trajectories to %s", ds.n_sims, data_dir)
    return data_dir


def train_command(cfg: RunConfig, data_dir: Path, out: Path, checkpoint_every: int = 50) -> Path:
    ds = load_dataset(data_dir)
    tcfg = cfg.training
    ckpt = out / "checkpoint.txt"

    def progress(record, state):
        if record["step"] % 10 == 0:
            vis = np.mean([v for k, v in record.items() if k.startswith("a0_")])
            log.info("step %d  tau %d  visible mismatch %.4g", record["step"], record["tau"], vis)
        if checkpoint_every and state.step % checkpoint_every == 0:
            save_checkpoint(ckpt, state.model, state.theta0, state.n_times, tcfg.dt, {"step": state.step})

    result = train(ds, cfg.architecture, tcfg, callback=progress)
    st = result.state
    save_checkpoint(ckpt, result.model, st.theta0, st.n_times, tcfg.dt, {"step": st.step})
    result.trajectory.to_csv(out / "trajectory.csv")
    names = list(cfg.architecture.names)
    rows = [[r["step"], r["tau"], *(r[n] for n in names)] for r in result.log]
    write_csv(out / "training_log.csv", ["step", "tau", *names], np.array(rows).reshape(len(rows), len(names) + 2))
    return ckpt


def _time_index(ckpt, t: float) -> int:
    k = int(round(t / ckpt.dt))
    if not 0 <= k < ckpt.n_times or abs(k * ckpt.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"timepoint {t} is not a grid point of [0, {(ckpt.n_times - 1) * ckpt.dt}]")
    return k


def sample_command(checkpoint, timepoint: float, n: int, seed: int, out: Path, steps: int = 100) -> list[Path]:
    """Draw ``n`` multi-layer lattices at ``timepoint`` by Gibbs sampling from a random start.

    Writes one integer grid per sample and layer, plus per-unit marginal
    probabilities (the last sweep's conditionals averaged over samples).
    """
    ckpt = load_checkpoint(checkpoint)
    k = _time_index(ckpt, timepoint)
    if n < 0:
        raise ValueError("number of samples must be non-negative")
    if n == 0:
        return []
    arch = ckpt.model.arch
    theta = integrate_forward(ckpt.model, ckpt.theta0, k, ckpt.dt).theta[-1]
    rng = np.random.default_rng(seed)
    state = sample_model(arch, theta, n, steps, rng)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        for l, layer in enumerate(state):
            p = out / f"sample_{i:03d}_layer{l}.txt"
            np.savetxt(p, layer[i], fmt="%d")
            paths.append(p)
    for l in range(arch.n_layers):
        probs = conditional_probs(arch, theta, state, l).mean(axis=0)
        for j, name in enumerate(arch.species[l]):
            p = out / f"marginal_layer{l}_{name}.txt"
            np.savetxt(p, probs[j + 1], fmt="%.17g")
            paths.append(p)
    return paths


def analyze_command(cfg: RunConfig, checkpoint, data_dir, obs: ObservableSpec, out: Path, seed: int) -> Path:
    ckpt = load_checkpoint(checkpoint)
    ds = load_dataset(data_dir)
    if ds.n_times != ckpt.n_times:
        raise ValueError(f"dataset has {ds.n_times} timepoints but the checkpoint covers {ckpt.n_times}")
    acfg = cfg.analysis
    traj = integrate_forward(ckpt.model, ckpt.theta0, ckpt.n_times - 1, ckpt.dt)
    dec = closure_terms(obs, ckpt.model, traj, acfg.n_samples, acfg.gibbs_steps, seed, smooth_cutoff=acfg.smoothing)
    ddata = data_derivative(ds, obs, ckpt.dt)
    header = ["t", *(f"term_{n}" for n in dec.names), "total", "data_mean", "data_derivative",
              "total_smooth", "data_derivative_smooth"]
    rows = np.column_stack([dec.times, dec.terms, dec.total, ensemble_mean(ds, obs), ddata,
                            smooth(dec.total, acfg.smoothing), smooth(ddata, acfg.smoothing)])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, header, rows)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyndbm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="YAML run config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", type=Path, default=Path("run"), help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("simulate", help="run the lattice ensemble"))
    sp = common(sub.add_parser("train", help="learn the interaction dynamics"))
    sp.add_argument("--data", type=Path, help="dataset directory (default OUT/data)")
    sp = common(sub.add_parser("sample", help="draw lattices from a checkpoint"))
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--time", type=float, default=0.0)
    sp.add_argument("-n", type=int, default=1)
    sp = common(sub.add_parser("analyze", help="closure decomposition vs simulation"))
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--data", type=Path, help="dataset directory (default OUT/data)")
    sp.add_argument("--observable", help="e.g. count:P, nn:H,P, nn2:P,P (default: first in config)")
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.simulation = replace(cfg.simulation, seed=args.seed)
        cfg.training = replace(cfg.training, seed=args.seed)
    return cfg


def run(argv=None) -> None:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cfg = _load(args)
    out = args.out
    if args.command == "simulate":
        out.mkdir(parents=True, exist_ok=True)
        simulate_command(cfg, out)
    elif args.command == "train":
        out.mkdir(parents=True, exist_ok=True)
        train_command(cfg, args.data or out / "data", out)
    elif args.command == "sample":
        seed = cfg.training.seed if args.seed is None else args.seed
        sample_command(args.checkpoint, args.time, args.n, seed, out, cfg.analysis.sample_steps)
    elif args.command == "analyze":
        obs = ObservableSpec.parse(args.observable or cfg.analysis.observables[0])
        dest = out if out.suffix == ".csv" else out / f"closure_{obs.label.replace(':', '_').replace(',', '_')}.csv"
        seed = cfg.training.seed if args.seed is None else args.seed
        analyze_command(cfg, args.checkpoint, args.data or out / "data", obs, dest, seed)


def main(argv=None) -> int:
    try:
        run(argv)
    except KeyboardInterrupt:
        print("dyndbm: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line diagnostic, no traceback
        print(f"dyndbm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
