"""Parameter sweeps over evaluation grids, one CSV per figure family.

A grid TOML holds a [sweep] table plus a full base scenario (same schema
as a training config):

  [sweep]
  figure = "N"            # N | pmax | pj | alpha | users | geometry | chi
  values = [0, 40, 60, 80]
  seeds = [1, 2, 3, 4, 5]
  algorithms = ["psd-td3", "random-ris", "no-ris"]
  axis = "bs_x"           # geometry figure only: bs_x | ris_y | jam_x | jam_y

Learning algorithms are trained once per (training scenario, seed) and
cached under <out>/checkpoints/; figures that only change an evaluation
parameter (pmax, pj, alpha) reuse one reference model per seed, while
figures that change the environment the policy lives in (N, users,
geometry, chi) train per grid value. An N of zero degenerates every
algorithm to the bare no-RIS system.

CSV schema (fig_<figure>.csv):
  figure,param,value,axis,algorithm,subchannels,seed,scenario_hash,
  mean_rate,std_rate,mean_rate_q1,mean_rate_q2,n_steps,error

Rows are sorted by (value, algorithm, seed) and floats use shortest
round-trip formatting, so a rerun is byte-identical. Grid points run in
one worker process each; set RISJAM_WORKERS to bound the pool.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .config import (ConfigError, ScenarioConfig, dbm_to_watts, ris_shape_for,
                     scenario_from_dict, scenario_hash)
from .harness import evaluate, run_training, run_baseline, write_csv
from .agent import load_checkpoint, save_checkpoint

__all__ = ["GridSpec", "load_grid", "sweep", "FIGURES", "CSV_HEADER"]

FIGURES = ("N", "pmax", "pj", "alpha", "users", "geometry", "chi")
GEOMETRY_AXES = ("bs_x", "ris_y", "jam_x", "jam_y")
# figures whose grid value only changes the test-time conditions
EVAL_ONLY_FIGURES = ("pmax", "pj", "alpha")
PARAM_NAMES = {"N": "n_elements", "pmax": "p_max_dbm", "pj": "jammer_power_dbm",
               "alpha": "jam_shape", "users": "users", "geometry": "offset_m",
               "chi": "chi"}
CSV_HEADER = ["figure", "param", "value", "axis", "algorithm", "subchannels",
              "seed", "scenario_hash", "mean_rate", "std_rate", "mean_rate_q1",
              "mean_rate_q2", "n_steps", "error"]


@dataclass(frozen=True)
class GridSpec:
    figure: str
    values: tuple
    seeds: tuple
    algorithms: tuple
    axis: str | None
    base: ScenarioConfig


def load_grid(path) -> GridSpec:
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    sweep_sec = doc.pop("sweep", None)
    if not isinstance(sweep_sec, dict):
        raise ConfigError(f"grid {path} needs a [sweep] table")
    figure = sweep_sec.pop("figure", None)
    if figure not in FIGURES:
        raise ConfigError(f"sweep.figure must be one of {FIGURES}, got {figure!r}")
    values = tuple(sweep_sec.pop("values", ()))
    seeds = tuple(int(s) for s in sweep_sec.pop("seeds", ()))
    algorithms = tuple(sweep_sec.pop("algorithms", ("psd-td3",)))
    axis = sweep_sec.pop("axis", None)
    if sweep_sec:
        raise ConfigError(f"unknown keys in [sweep]: {sorted(sweep_sec)}")
    if figure == "geometry":
        if axis not in GEOMETRY_AXES:
            raise ConfigError(f"geometry sweeps need axis in {GEOMETRY_AXES}")
    elif axis is not None:
        raise ConfigError("sweep.axis only applies to the geometry figure")
    base = scenario_from_dict(doc, source=str(path))
    return GridSpec(figure=figure, values=values, seeds=seeds,
                    algorithms=algorithms, axis=axis, base=base)


def _with_elements(sc: ScenarioConfig, n: int) -> ScenarioConfig:
    ny, nz = ris_shape_for(n)
    return replace(sc, geometry=replace(sc.geometry, ris_cols=ny, ris_rows=nz))


def point_scenarios(grid: GridSpec, value, algorithm: str, seed: int):
    """(train_scenario | None, eval_scenario) for one grid point."""
    base = replace(grid.base, seed=seed, kind=algorithm)
    fig = grid.figure
    if fig == "N":
        n = int(value)
        if n == 0:
            eval_sc = _with_elements(replace(base, kind="no-ris"), 0)
        else:
            eval_sc = _with_elements(base, n)
    elif fig == "pmax":
        eval_sc = replace(base, p_max_w=dbm_to_watts(float(value)))
    elif fig == "pj":
        eval_sc = replace(base, jam_power_w=dbm_to_watts(float(value)))
    elif fig == "alpha":
        eval_sc = replace(base, jam_alpha=float(value), jam_beta=float(value),
                          jam_equal_power=False)
    elif fig == "users":
        eval_sc = replace(base, users=int(value))
    elif fig == "geometry":
        g = base.geometry
        if grid.axis == "bs_x":
            g = replace(g, bs_offset=float(value))
        elif grid.axis == "ris_y":
            g = replace(g, ris_offset_y=float(value))
        elif grid.axis == "jam_x":
            g = replace(g, jammer_x=float(value))
        else:
            g = replace(g, jammer_y=float(value))
        eval_sc = replace(base, geometry=g)
    elif fig == "chi":
        eval_sc = replace(base, qos=replace(base.qos, chi=float(value)))
    else:
        raise ConfigError(f"unknown figure {fig!r}")

    if eval_sc.kind not in ("psd-td3", "psd-ddpg"):
        return None, eval_sc
    # policies are trained under the conditions they will live in, except
    # for test-time-only parameters, where one reference model per seed
    # is trained on the base configuration
    train_sc = replace(base, kind=eval_sc.kind) if fig in EVAL_ONLY_FIGURES else eval_sc
    return train_sc, eval_sc


def _train_point(args):
    train_sc, ckpt_dir = args
    if os.path.exists(os.path.join(ckpt_dir, "meta.json")):
        return ckpt_dir, None
    try:
        _, trained = run_training(train_sc)
        save_checkpoint(trained.params, ckpt_dir,
                        episode=train_sc.td3.episodes - 1,
                        step=train_sc.td3.steps_per_episode)
        return ckpt_dir, None
    except Exception as exc:   # error lands in the point's CSV row
        return ckpt_dir, f"{type(exc).__name__}: {exc}"


def _eval_point(args):
    grid_figure, value, axis, algorithm, seed, eval_sc, ckpt_dir, train_error = args
    row = {
        "figure": grid_figure, "param": PARAM_NAMES[grid_figure], "value": value,
        "axis": axis or "", "algorithm": algorithm,
        "subchannels": eval_sc.propagation.subchannels, "seed": seed,
        "scenario_hash": scenario_hash(eval_sc),
        "mean_rate": None, "std_rate": None, "mean_rate_q1": None,
        "mean_rate_q2": None, "n_steps": None, "error": "",
    }
    if train_error:
        row["error"] = train_error
        return row
    try:
        params = None
        if ckpt_dir is not None:
            params, _ = load_checkpoint(ckpt_dir, eval_sc.td3)
        res = evaluate(eval_sc, params)
        row.update(mean_rate=res.mean_rate, std_rate=res.std_rate,
                   mean_rate_q1=res.mean_rate_q1, mean_rate_q2=res.mean_rate_q2,
                   n_steps=res.n_steps)
    except Exception as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _workers(n_tasks: int) -> int:
    env_val = os.environ.get("RISJAM_WORKERS", "")
    if env_val.strip():
        return max(1, int(env_val))
    return max(1, min(os.cpu_count() or 1, n_tasks))


def _run_tasks(fn, tasks):
    if not tasks:
        return []
    n = _workers(len(tasks))
    if n == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks))


def sweep(grid: GridSpec, out_dir) -> str:
    """Run every (value, algorithm, seed) point and emit fig_<figure>.csv."""
    os.makedirs(out_dir, exist_ok=True)
    ckpt_root = os.path.join(out_dir, "checkpoints")

    points = []
    train_jobs = {}
    for value in grid.values:
        for algorithm in grid.algorithms:
            for seed in grid.seeds:
                train_sc, eval_sc = point_scenarios(grid, value, algorithm, seed)
                ckpt_dir = None
                if train_sc is not None:
                    ckpt_dir = os.path.join(ckpt_root, f"{scenario_hash(train_sc)}")
                    train_jobs[ckpt_dir] = train_sc
                points.append((value, algorithm, seed, eval_sc, ckpt_dir))

    train_errors = {}
    results = _run_tasks(_train_point,
                         [(sc, d) for d, sc in sorted(train_jobs.items())])
    for ckpt_dir, err in results:
        if err:
            train_errors[ckpt_dir] = err

    rows = _run_tasks(_eval_point,
                      [(grid.figure, value, grid.axis, algorithm, seed, eval_sc,
                        ckpt_dir, train_errors.get(ckpt_dir))
                       for value, algorithm, seed, eval_sc, ckpt_dir in points])

    rows.sort(key=lambda r: (float(r["value"]), r["algorithm"], r["seed"]))
    path = os.path.join(out_dir, f"fig_{grid.figure}.csv")
    write_csv(path, CSV_HEADER, [[r[c] for c in CSV_HEADER] for r in rows])
    return path
