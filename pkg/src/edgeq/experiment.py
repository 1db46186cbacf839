"""Sweep harness: expand an experiment spec into (algorithm, sigma,
arrival-rate, seed) cells, run them (optionally across processes), and
write per-episode and per-cell summary CSVs plus a metadata echo.

Cells are embarrassingly parallel: each derives an isolated random stream
from the tuple (seed, algorithm, sigma, arrival rate), so results do not
depend on worker count or completion order.  Rows are emitted in the
deterministic cell order of the expanded spec, which makes reruns
byte-identical except for the wall-time column of the summary.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import multiprocessing
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .agent import EpisodeLog, TrainConfig, evaluate_policy, greedy_policy, \
    make_q_policy, train_dpdqo, train_dqn_baseline
from .env import EnvConfig
from . import env as menv

ALGORITHMS = ("greedy", "dqn", "dpdqo")
FINAL_WINDOW = 50   # episodes averaged for the summary return

EPISODE_COLUMNS = ["algorithm", "sigma", "arrival_rate", "seed", "episode",
                   "return_disc", "return_undisc", "drops", "mean_loss",
                   "config_hash"]
SUMMARY_COLUMNS = ["algorithm", "sigma", "arrival_rate", "seed", "episodes",
                   "final_return_disc", "final_return_undisc", "total_drops",
                   "wall_time_s", "config_hash"]


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved sweep description; defaults reproduce the reference setup
    (arrival rate 0.2, four noise levels, ten seeds, all three algorithms)."""

    env: EnvConfig = EnvConfig()
    train: TrainConfig = TrainConfig()
    algorithms: tuple[str, ...] = ALGORITHMS
    sigmas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)
    arrival_rates: tuple[float, ...] = (0.2,)
    seeds: tuple[int, ...] = tuple(range(10))
    output_dir: str = "results"

    def __post_init__(self):
        if not self.algorithms or not self.seeds:
            raise ValueError("algorithms and seeds must be nonempty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be nonnegative")


@dataclass(frozen=True)
class Cell:
    algorithm: str
    sigma: float
    arrival_rate: float
    seed: int


def load_spec(path: str) -> ExperimentSpec:
    """Parse a JSON spec file; unknown keys are rejected, missing ones take
    the built-in defaults."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("spec must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown spec keys: {sorted(unknown)}")
    kwargs = {}
    if "env" in raw:
        kwargs["env"] = EnvConfig(**raw["env"])
    if "train" in raw:
        kwargs["train"] = TrainConfig(**raw["train"])
    for key in ("algorithms", "sigmas", "arrival_rates", "seeds"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    if "output_dir" in raw:
        kwargs["output_dir"] = raw["output_dir"]
    return ExperimentSpec(**kwargs)


def expand_cells(spec: ExperimentSpec) -> list[Cell]:
    """Cartesian cell list; sigma only varies for the noised algorithm."""
    cells = []
    for alg in spec.algorithms:
        sigmas = spec.sigmas if alg == "dpdqo" else (0.0,)
        for sigma in sigmas:
            for rate in spec.arrival_rates:
                for seed in spec.seeds:
                    cells.append(Cell(alg, float(sigma), float(rate), seed))
    return cells


def cell_seed(cell: Cell) -> np.random.SeedSequence:
    """Stable per-cell stream: the base seed is shared across algorithms of
    one comparison group, the full tuple decorrelates their streams."""
    alg_id = ALGORITHMS.index(cell.algorithm)
    return np.random.SeedSequence([cell.seed, alg_id,
                                   _float_key(cell.sigma),
                                   _float_key(cell.arrival_rate)])


def _float_key(x: float) -> int:
    # exact, platform-independent integer image of the float
    return int(np.float64(x).view(np.uint64))


def run_cell(spec: ExperimentSpec, cell: Cell) -> tuple[list[EpisodeLog], float]:
    """Execute one cell and return its episode logs and wall time."""
    t0 = time.perf_counter()
    env_cfg = dataclasses.replace(spec.env, arrival_rate=cell.arrival_rate)
    run_seed = int(cell_seed(cell).generate_state(1)[0])
    train_cfg = dataclasses.replace(spec.train, sigma=cell.sigma,
                                    seed=run_seed)
    if cell.algorithm == "dpdqo":
        _, logs = train_dpdqo(env_cfg, train_cfg)
    elif cell.algorithm == "dqn":
        _, logs = train_dqn_baseline(env_cfg, train_cfg)
    else:
        logs = _run_greedy(env_cfg, train_cfg, run_seed)
    return logs, time.perf_counter() - t0


def _run_greedy(env_cfg: EnvConfig, cfg: TrainConfig, seed: int) -> list[EpisodeLog]:
    """The greedy baseline does not learn; log one episode per training
    episode so its curve aligns with the learners'."""
    rng = np.random.default_rng(seed)
    logs = []
    for episode in range(1, cfg.episodes + 1):
        t0 = time.perf_counter()
        state = menv.reset(env_cfg)
        ret_u = ret_d = 0.0
        disc = 1.0
        for _ in range(cfg.horizon):
            action = greedy_policy(state, env_cfg)
            state, reward, _, _ = menv.step(env_cfg, state, action, rng)
            ret_u += reward
            ret_d += disc * reward
            disc *= cfg.gamma
        logs.append(EpisodeLog(episode=episode, return_undisc=ret_u,
                               return_disc=ret_d, drops=state.dropped,
                               mean_loss=0.0,
                               wall_time=time.perf_counter() - t0))
    return logs


def _worker(args):
    spec, cell = args
    return run_cell(spec, cell)


def run_sweep(spec: ExperimentSpec, workers: int = 1,
              progress=None) -> dict[Cell, tuple[list[EpisodeLog], float]]:
    """Run every cell of the spec; ``workers`` > 1 uses a process pool.
    Results are keyed by cell and independent of the worker count."""
    cells = expand_cells(spec)
    if workers > 1 and len(cells) > 1:
        with multiprocessing.Pool(workers) as pool:
            out = {}
            for cell, res in zip(cells, pool.imap(
                    _worker, [(spec, c) for c in cells])):
                out[cell] = res
                if progress:
                    progress(cell)
            return out
    out = {}
    for cell in cells:
        out[cell] = run_cell(spec, cell)
        if progress:
            progress(cell)
    return out


def config_hash(spec: ExperimentSpec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def spec_to_dict(spec: ExperimentSpec) -> dict:
    d = dataclasses.asdict(spec)
    for key in ("algorithms", "sigmas", "arrival_rates", "seeds"):
        d[key] = list(d[key])
    return d


def final_window_mean(logs: list[EpisodeLog], attr: str = "return_disc",
                      window: int = FINAL_WINDOW) -> float:
    vals = [getattr(l, attr) for l in logs[-window:]]
    return float(np.mean(vals))


def write_outputs(spec: ExperimentSpec,
                  results: dict[Cell, tuple[list[EpisodeLog], float]],
                  out_dir: str) -> dict:
    """Write episodes.csv, summary.csv, and metadata.json; returns metadata."""
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(spec)
    cells = expand_cells(spec)

    with open(os.path.join(out_dir, "episodes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for cell in cells:
            logs, _ = results[cell]
            for log in logs:
                w.writerow([cell.algorithm, cell.sigma, cell.arrival_rate,
                            cell.seed, log.episode, log.return_disc,
                            log.return_undisc, log.drops, log.mean_loss,
                            chash])

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for cell in cells:
            logs, wall = results[cell]
            w.writerow([cell.algorithm, cell.sigma, cell.arrival_rate,
                        cell.seed, len(logs),
                        final_window_mean(logs, "return_disc"),
                        final_window_mean(logs, "return_undisc"),
                        logs[-1].drops, wall, chash])

    meta = {
        "config": spec_to_dict(spec),
        "config_hash": chash,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "grad_clip_enabled": spec.train.grad_clip is not None,
        "cells": [{"algorithm": c.algorithm, "sigma": c.sigma,
                   "arrival_rate": c.arrival_rate, "seed": c.seed,
                   "wall_time_s": results[c][1]} for c in cells],
        "total_wall_time_s": sum(results[c][1] for c in cells),
    }
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    return meta


def plot_data_rows(summary_path: str,
                   episodes_path: str | None = None) -> list[list]:
    """Tidy plotting rows aggregated across seeds.

    ``learning_curve`` rows come from the per-episode CSV (by default the
    sibling episodes.csv of the summary file): x is the episode index, one
    series per (algorithm, sigma, arrival rate).  ``arrival_sweep`` rows
    come from the summary itself: x is the arrival rate, y the final-window
    return.  Each row carries (figure, x, series, mean, min, max).
    """
    summary = _read_csv(summary_path, SUMMARY_COLUMNS)
    rows: list[list] = []

    if episodes_path is None:
        candidate = os.path.join(os.path.dirname(summary_path) or ".",
                                 "episodes.csv")
        episodes_path = candidate if os.path.exists(candidate) else None
    if episodes_path is not None:
        episodes = _read_csv(episodes_path, EPISODE_COLUMNS)
        series: dict[tuple, dict[int, list[float]]] = {}
        hashes: dict[tuple, str] = {}
        for rec in episodes:
            key = (rec["algorithm"], rec["sigma"], rec["arrival_rate"])
            ep = int(rec["episode"])
            series.setdefault(key, {}).setdefault(ep, []).append(
                float(rec["return_disc"]))
            hashes[key] = rec["config_hash"]
        for key in sorted(series):
            label = _series_label(*key)
            for ep in sorted(series[key]):
                vals = series[key][ep]
                rows.append(["learning_curve", ep, label,
                             float(np.mean(vals)), min(vals), max(vals),
                             hashes[key]])

    sweep: dict[tuple, dict[float, list[float]]] = {}
    hashes = {}
    for rec in summary:
        key = (rec["algorithm"], rec["sigma"])
        rate = float(rec["arrival_rate"])
        sweep.setdefault(key, {}).setdefault(rate, []).append(
            float(rec["final_return_disc"]))
        hashes[key] = rec["config_hash"]
    for key in sorted(sweep):
        label = _series_label(key[0], key[1], None)
        for rate in sorted(sweep[key]):
            vals = sweep[key][rate]
            rows.append(["arrival_sweep", rate, label,
                         float(np.mean(vals)), min(vals), max(vals),
                         hashes[key]])
    return rows


def _series_label(algorithm: str, sigma, arrival_rate) -> str:
    label = algorithm
    if algorithm == "dpdqo":
        label += f"@sigma={sigma}"
    if arrival_rate is not None:
        label += f"@rate={arrival_rate}"
    return label


def _read_csv(path: str, expected: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: expected columns {expected}, "
                             f"found {reader.fieldnames}")
        return list(reader)
