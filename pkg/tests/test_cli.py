import json

from fimstar.cli import main
from fimstar.config import desk_profile


def test_report_complexity(capsys):
    assert main(["report", "complexity"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["state_dim"] == 1441 and rep["action_dim"] == 210


def test_run_and_aggregate(tmp_path, capsys):
    cfg = desk_profile().replace(
        agent={"actor_hidden": [8], "critic_hidden": [8], "meta_hidden": [4], "batch_size": 4},
        training={"episodes": 2, "steps_per_episode": 3},
    )
    path = tmp_path / "c.yaml"
    path.write_text(cfg.dump())
    out = tmp_path / "res"
    assert main(["run", "lr_sweep", "--config", str(path), "--seeds", "1,2", "--out", str(out),
                 "--series", "lr_0.001"]) == 0
    files = sorted((out / "lr_sweep" / "lr_0.001").glob("seed_*.csv"))
    assert [f.name for f in files] == ["seed_1.csv", "seed_2.csv"]
    plot = tmp_path / "plot.csv"
    assert main(["aggregate", "--out", str(plot), *map(str, files)]) == 0
    lines = plot.read_text().strip().split("\n")
    assert lines[0] == "episode,series,mean,stderr" and len(lines) == 3
    capsys.readouterr()


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("system:\n  p_max: -1\n")
    assert main(["report", "complexity", "--config", str(path)]) == 2
    assert "system.p_max" in capsys.readouterr().err
