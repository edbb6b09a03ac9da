import json
import subprocess
import sys

import numpy as np
import pytest

from linrecover.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from linrecover.csvio import load_csv, write_csv
from oracles import best_subset_vex

SUBCOMMANDS = ["gen", "select", "fit", "bench", "report"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help_exits_zero(sub):
    with pytest.raises(SystemExit) as info:
        main([sub, "--help"])
    assert info.value.code == 0


@pytest.mark.parametrize("argv", [[], ["gen", "--bogus", "1", "--out", "x"], ["select", "--k", "two"], ["explode"]])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_gen(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code, stdout, _ = run(capsys, "gen", "--m", "500", "--v", "50", "--sigma2", "0.01", "--seed", "7", "--out", str(out))
    assert code == EXIT_OK and "500x50" in stdout
    assert load_csv(out).shape == (500, 50)


def test_gen_deterministic(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        run(capsys, "gen", "--m", "30", "--v", "12", "--seed", "3", "--out", str(tmp_path / name))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gen_small_v_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--v", "9", "--out", str(tmp_path / "x.csv"))
    assert code == EXIT_USAGE and "v must be" in err


def test_gen_unwritable_is_io_error(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--m", "5", "--v", "10", "--out", str(tmp_path / "no" / "x.csv"))
    assert code == EXIT_IO


def test_select_matches_oracle(tmp_path, capsys):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 6)) @ rng.standard_normal((6, 6))
    write_csv(X, tmp_path / "d.csv")
    code, stdout, _ = run(capsys, "select", "--in", str(tmp_path / "d.csv"), "--method", "mpbr", "--k", "2",
                          "--out", str(tmp_path / "s.json"))
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "s.json").read_text())
    assert len(doc["indices"]) == 2 and len(doc["vex_profile"]) == 2
    assert doc["vex_profile"][-1] <= best_subset_vex(X - X.mean(axis=0), 2) + 1e-6


def test_select_duplicate_columns(tmp_path, capsys):
    a = np.random.default_rng(0).standard_normal(20)
    write_csv(np.column_stack([a, a, 0.1 * a[::-1]]), tmp_path / "d.csv")
    run(capsys, "select", "--in", str(tmp_path / "d.csv"), "--k", "1", "--out", str(tmp_path / "s.json"))
    assert json.loads((tmp_path / "s.json").read_text())["indices"] == [0]


def test_select_bad_csv_is_io_error(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("1,2\n3\n")
    code, _, err = run(capsys, "select", "--in", str(tmp_path / "d.csv"), "--k", "1", "--out", str(tmp_path / "s.json"))
    assert code == EXIT_IO and "line 2" in err


def test_select_missing_file(tmp_path, capsys):
    code, _, _ = run(capsys, "select", "--in", str(tmp_path / "none.csv"), "--k", "1", "--out", str(tmp_path / "s.json"))
    assert code == EXIT_IO


@pytest.fixture
def synth_csv(tmp_path, capsys):
    path = tmp_path / "x.csv"
    run(capsys, "gen", "--m", "200", "--v", "20", "--seed", "1", "--out", str(path))
    return path


@pytest.mark.parametrize("model", ["fsca-rlc", "pca-rlc", "fsca-sde"])
def test_fit_writes_model_and_metrics(synth_csv, tmp_path, capsys, model):
    out = tmp_path / "m.json"
    code, stdout, _ = run(capsys, "fit", "--in", str(synth_csv), "--model", model, "--k", "3", "--epochs", "20", "--out", str(out))
    assert code == EXIT_OK and "vex_test=" in stdout
    doc = json.loads(out.read_text())
    assert 0 < doc["metrics"]["vex_test"] <= 100


def test_fit_stdout_deterministic(synth_csv, tmp_path, capsys):
    outs = [run(capsys, "fit", "--in", str(synth_csv), "--k", "3", "--epochs", "30", "--seed", "2", "--out", str(tmp_path / "m.json"))[1]
            for _ in range(2)]
    assert outs[0] == outs[1]


def test_fit_zero_epochs_is_linear_model(synth_csv, tmp_path, capsys):
    run(capsys, "fit", "--in", str(synth_csv), "--k", "3", "--epochs", "0", "--out", str(tmp_path / "m.json"))
    doc = json.loads((tmp_path / "m.json").read_text())
    assert not any(doc["recovery_net"]["weights"][-1])


def test_fit_degenerate_kbar(synth_csv, tmp_path, capsys):
    code, stdout, _ = run(capsys, "fit", "--in", str(synth_csv), "--k", "10", "--tau", "50", "--out", str(tmp_path / "m.json"))
    assert code == EXIT_OK and "k_bar=0" in stdout


def test_fit_bad_k_is_usage_error(synth_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "fit", "--in", str(synth_csv), "--k", "99", "--out", str(tmp_path / "m.json"))
    assert code == EXIT_USAGE


def test_fit_divergence_exits_three(synth_csv, tmp_path, capsys, monkeypatch):
    import linrecover.cli as cli
    from linrecover.neuralnet import TrainingDivergedError

    def boom(*a, **k):
        raise TrainingDivergedError(4)

    monkeypatch.setattr(cli, "fit_fsca_rlc", boom)
    code, _, err = run(capsys, "fit", "--in", str(synth_csv), "--k", "3", "--out", str(tmp_path / "m.json"))
    assert code == EXIT_NUMERIC and "epoch 4" in err


def _bench_config(tmp_path, **over):
    cfg = {
        "data_source": {"synthetic": {"m": 80, "v": 12}},
        "methods": ["fsca", "mpbr"],
        "k_values": [2, 3],
        "mc_runs": 3,
        "master_seed": 1,
    }
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_bench_and_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LINRECOVER_THREADS", "2")
    cfg = _bench_config(tmp_path)
    code, _, _ = run(capsys, "bench", "--config", str(cfg), "--out-dir", str(tmp_path / "out"))
    assert code == EXIT_OK
    code, stdout, _ = run(capsys, "report", "--in", str(tmp_path / "out"))
    assert code == EXIT_OK
    fsca_rows = [line.split() for line in stdout.splitlines() if line.startswith("fsca")]
    assert fsca_rows and all(row[-1] == "1" for row in fsca_rows)


def test_bench_empty_methods_is_usage_error(tmp_path, capsys):
    cfg = _bench_config(tmp_path, methods=[])
    code, _, err = run(capsys, "bench", "--config", str(cfg), "--out-dir", str(tmp_path / "out"))
    assert code == EXIT_USAGE and "methods" in err


def test_bench_bad_env_threads(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LINRECOVER_THREADS", "many")
    code, _, _ = run(capsys, "bench", "--config", str(_bench_config(tmp_path)), "--out-dir", str(tmp_path / "o"))
    assert code == EXIT_USAGE


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "linrecover", "gen", "--m", "5", "--v", "10", "--out", str(tmp_path / "x.csv")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
