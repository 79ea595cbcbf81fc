import csv
import os
from dataclasses import replace

import numpy as np
import pytest

from risjam.cli import main
from risjam.config import ConfigError, ScenarioConfig
from risjam.sweeps import (CSV_HEADER, GridSpec, load_grid, point_scenarios,
                           sweep)


def tiny_base():
    base = ScenarioConfig()
    return replace(
        base,
        users=2,
        geometry=replace(base.geometry, ris_cols=2, ris_rows=2),
        propagation=replace(base.propagation, subchannels=4),
        td3=replace(base.td3, episodes=2, steps_per_episode=5, batch_size=4,
                    hidden=(8, 8)),
        allocator=replace(base.allocator, max_outer=15, max_inner=6),
        eval_steps=5,
    )


def tiny_grid(**kw):
    spec = dict(figure="pmax", values=(20.0, 30.0), seeds=(1,),
                algorithms=("psd-td3", "no-ris"), axis=None, base=tiny_base())
    spec.update(kw)
    return GridSpec(**spec)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestPointScenarios:
    def test_eval_only_figures_share_training_scenario(self):
        grid = tiny_grid()
        t20, e20 = point_scenarios(grid, 20.0, "psd-td3", 1)
        t30, e30 = point_scenarios(grid, 30.0, "psd-td3", 1)
        assert t20 == t30                      # one reference model per seed
        assert e20.p_max_w != e30.p_max_w

    def test_environment_figures_train_per_value(self):
        grid = tiny_grid(figure="chi", values=(0.5, 2.0))
        t1, _ = point_scenarios(grid, 0.5, "psd-td3", 1)
        t2, _ = point_scenarios(grid, 2.0, "psd-td3", 1)
        assert t1 != t2
        assert t1.qos.chi == 0.5 and t2.qos.chi == 2.0

    def test_baselines_need_no_training(self):
        grid = tiny_grid()
        t, e = point_scenarios(grid, 20.0, "no-ris", 3)
        assert t is None and e.kind == "no-ris" and e.seed == 3

    def test_n_zero_degrades_to_no_ris(self):
        grid = tiny_grid(figure="N", values=(0, 4))
        t, e = point_scenarios(grid, 0, "psd-td3", 1)
        assert t is None and e.kind == "no-ris"
        assert e.geometry.num_elements == 0

    def test_n_figure_resizes_surface(self):
        grid = tiny_grid(figure="N", values=(0, 4))
        t, e = point_scenarios(grid, 4, "psd-td3", 1)
        assert e.geometry.num_elements == 4
        assert t == e                           # trained at its own size

    def test_geometry_axis(self):
        grid = tiny_grid(figure="geometry", values=(5.0,), axis="jam_y")
        _, e = point_scenarios(grid, 5.0, "no-ris", 1)
        assert e.geometry.jammer_y == 5.0


class TestSweep:
    def test_empty_grid_writes_header_only(self, tmp_path):
        grid = tiny_grid(values=())
        path = sweep(grid, tmp_path)
        text = open(path).read().splitlines()
        assert text == [",".join(CSV_HEADER)]

    def test_single_point_single_row(self, tmp_path):
        grid = tiny_grid(values=(30.0,), algorithms=("no-ris",))
        path = sweep(grid, tmp_path)
        rows = read_rows(path)
        assert len(rows) == 1
        row = rows[0]
        assert row["figure"] == "pmax" and row["algorithm"] == "no-ris"
        assert row["error"] == ""
        assert float(row["mean_rate"]) >= 0.0

    def test_full_tiny_sweep_and_checkpoint_reuse(self, tmp_path):
        grid = tiny_grid()
        path = sweep(grid, tmp_path)
        rows = read_rows(path)
        assert len(rows) == 4                   # 2 values x 2 algorithms x 1 seed
        ckpts = os.listdir(tmp_path / "checkpoints")
        assert len(ckpts) == 1                  # shared reference model

    def test_byte_identical_rerun(self, tmp_path):
        grid = tiny_grid()
        p1 = sweep(grid, tmp_path / "a")
        p2 = sweep(grid, tmp_path / "b")
        assert open(p1, "rb").read() == open(p2, "rb").read()
        # second run over the same dir reuses checkpoints and matches too
        p3 = sweep(grid, tmp_path / "a")
        assert open(p3, "rb").read() == open(p1, "rb").read()


class TestGridLoading:
    def test_load_ships_grids(self):
        g = load_grid("configs/grid_N.toml")
        assert g.figure == "N" and 0 in g.values

    def test_missing_sweep_table(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[scenario]\nseed = 1\n")
        with pytest.raises(ConfigError, match="sweep"):
            load_grid(p)

    def test_bad_figure(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('[sweep]\nfigure = "waterfall"\n')
        with pytest.raises(ConfigError, match="figure"):
            load_grid(p)

    def test_axis_only_for_geometry(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('[sweep]\nfigure = "pmax"\nvalues = [1]\naxis = "bs_x"\n')
        with pytest.raises(ConfigError, match="axis"):
            load_grid(p)


def write_tiny_toml(path, **overrides):
    body = {
        "scenario": {"kind": "psd-td3", "seed": 1, "users": 2},
        "geometry": {"ris_cols": 2, "ris_rows": 2},
        "propagation": {"subchannels": 4},
        "td3": {"episodes": 1, "steps_per_episode": 4, "batch_size": 2,
                "hidden": [8, 8]},
        "allocator": {"max_outer": 10, "max_inner": 5},
    }
    for sec, kv in overrides.items():
        body.setdefault(sec, {}).update(kv)
    lines = []
    for sec, kv in body.items():
        lines.append(f"[{sec}]")
        for k, v in kv.items():
            if isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            elif isinstance(v, bool):
                lines.append(f"{k} = {str(v).lower()}")
            elif isinstance(v, list):
                lines.append(f"{k} = {v}")
            else:
                lines.append(f"{k} = {v}")
        lines.append("")
    path.write_text("\n".join(lines))


class TestCli:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[scenario]\nwibble = 3\n")
        assert main(["train", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_train_and_eval_round_trip(self, tmp_path, capsys):
        cfg = tmp_path / "tiny.toml"
        write_tiny_toml(cfg)
        out = tmp_path / "run"
        assert main(["train", str(cfg), "--out", str(out)]) == 0
        assert (out / "steps.csv").exists()
        assert main(["eval", str(out / "checkpoint_final"), str(cfg)]) == 0
        assert "mean rate" in capsys.readouterr().out

    def test_train_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "tiny.toml"
        write_tiny_toml(cfg)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["train", str(cfg), "--out", str(out1), "--seed", "7"])
        main(["train", str(cfg), "--out", str(out2), "--seed", "8"])
        assert (out1 / "steps.csv").read_text() != (out2 / "steps.csv").read_text()

    def test_train_rerun_byte_identical(self, tmp_path):
        cfg = tmp_path / "tiny.toml"
        write_tiny_toml(cfg)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["train", str(cfg), "--out", str(out1)])
        main(["train", str(cfg), "--out", str(out2)])
        for name in ("steps.csv", "episodes.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_baseline_kind_trains_as_log_only(self, tmp_path):
        cfg = tmp_path / "tiny.toml"
        write_tiny_toml(cfg, scenario={"kind": "no-ris"})
        out = tmp_path / "base"
        assert main(["train", str(cfg), "--out", str(out)]) == 0
        assert (out / "steps.csv").exists()

    def test_oracle_check_passes(self, capsys):
        assert main(["oracle-check", "--instances", "25", "--kmax", "3",
                     "--seed", "3"]) == 0
        assert "exact" in capsys.readouterr().out

    def test_sweep_cli(self, tmp_path, capsys):
        grid = tmp_path / "grid.toml"
        write_tiny_toml(grid)
        text = grid.read_text()
        grid.write_text('[sweep]\nfigure = "pmax"\nvalues = [30.0]\n'
                        'seeds = [1]\nalgorithms = ["no-ris"]\n\n' + text)
        out = tmp_path / "sweep"
        assert main(["sweep", str(grid), "--out", str(out)]) == 0
        assert (out / "fig_pmax.csv").exists()

    def test_sweep_figure_mismatch(self, tmp_path, capsys):
        grid = tmp_path / "grid.toml"
        write_tiny_toml(grid)
        text = grid.read_text()
        grid.write_text('[sweep]\nfigure = "pmax"\nvalues = [30.0]\n'
                        'seeds = [1]\nalgorithms = ["no-ris"]\n\n' + text)
        assert main(["sweep", str(grid), "--figure", "chi"]) == 1
