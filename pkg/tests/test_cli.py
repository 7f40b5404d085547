"""Command-line interface: exit codes, artifact chaining, output resolution."""

import json
import subprocess
import sys

import pytest

from vibefuse.cli import main
from vibefuse.config import load_config
from vibefuse.pipeline import resolve_out_dir

MICRO = {
    "seed": 11,
    "model": {
        "panel_edge_m": 0.45,
        "thickness_m": 0.012,
        "elements_per_edge": 2,
        "elements_through": 1,
        "freq_lo_hz": 100.0,
        "freq_hi_hz": 150.0,
        "n_freq": 3,
        "young_pa": 2.06e11,
        "poisson": 0.3,
        "density_kgm3": 7850.0,
        "a_mass": 0.01,
        "a_stiff": 1e-4,
        "force_amplitude_n": 1.0,
    },
    "reduction": {"n_masters": 8, "report_modes": 3},
    "sampling": {"count": 28, "mean": 0.0, "std": 0.1, "seed": None},
    "split": {"lf_train": 22, "hf_train": 18, "seed": None},
    "mfdf_cnn": {
        "stage1_hidden": [8],
        "linear_hidden": [4],
        "nonlinear_hidden": [4],
        "alpha": 0.6,
        "gamma": 0.8,
        "beta_low": 0.5,
        "beta_high_real": 2.0,
        "beta_high_pseudo": 1e-5,
        "epochs": 3,
        "batch_size": 4,
        "learning_rate": 1e-3,
        "loss_form": "separable",
        "standardize": True,
        "seed": None,
    },
    "mlmrgp": {
        "roughness_lo": 1e-4,
        "roughness_hi": 1e3,
        "rho_bound": 10.0,
        "grouping": "segment_pairs",
        "jitter": 1e-8,
        "particles": 4,
        "iterations": 8,
        "inertia": 0.72,
        "cognitive": 1.49,
        "social": 1.49,
        "polish": False,
        "seed": None,
    },
    "eval": {
        "robustness_runs": 2,
        "hf_sizes": [18, 20],
        "alpha_grid": [0.0, 0.5, 1.0],
        "n_curves": 2,
        "seed": None,
    },
    "io": {"out_dir": None},
}


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.json"
    path.write_text(json.dumps(MICRO))
    return str(path)


def run(micro_config, out, *args):
    return main(["--config", micro_config, "--out", str(out), *args])


def test_stage_chain_writes_artifacts(micro_config, tmp_path, capsys):
    """Each verb runs from the previous verb's artifacts and reports them."""
    out = tmp_path / "run"
    expected = {
        ("mesh",): ["model_info.json", "modes.csv"],
        ("sample",): ["samples.csv"],
        ("simulate",): ["dataset_high.csv", "dataset_low.csv", "summary_high.csv",
                        "hist_low.csv"],
        ("split",): ["split.json"],
        ("train", "mfdf-cnn"): ["model_mfdfcnn.npz", "loss_history.csv"],
        ("train", "mlmrgp"): ["model_mlmrgp.json"],
        ("predict",): ["predictions_mfdfcnn.csv", "predictions_mlmrgp.csv"],
        ("evaluate",): ["comparison.csv", "curves_1.csv", "scatter_f1.csv"],
        ("study", "robustness"): ["robustness.csv"],
        ("study", "hf-fraction"): ["sweep_hf.csv"],
        ("study", "alpha"): ["sweep_alpha.csv"],
    }
    for verb, names in expected.items():
        assert run(micro_config, out, *verb) == 0
        assert "wrote" in capsys.readouterr().out
        for name in names:
            assert (out / name).exists(), f"{verb} did not write {name}"
    info = json.loads((out / "model_info.json").read_text())
    assert info["n_masters"] == 8
    assert info["config_hash"] == load_config(micro_config).hash


def test_missing_prerequisite_exits_one(micro_config, tmp_path, capsys):
    assert run(micro_config, tmp_path / "empty", "simulate") == 1
    err = capsys.readouterr().err
    assert "vibefuse: error" in err and "vibefuse sample" in err

    assert run(micro_config, tmp_path / "empty2", "predict") == 1
    assert "run `vibefuse" in capsys.readouterr().err


def test_config_errors_exit_two(micro_config, tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.json"), "mesh"]) == 2
    assert "config error" in capsys.readouterr().err

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**MICRO, "bogus": 1}))
    assert main(["--config", str(bad), "mesh"]) == 2
    assert "bogus" in capsys.readouterr().err

    assert run(micro_config, tmp_path, "--jobs", "0", "mesh") == 2
    assert "--jobs" in capsys.readouterr().err


def test_usage_errors_exit_two(micro_config):
    # argparse rejects unknown verbs, a bare train, and a missing --config
    for argv in (
        ["--config", micro_config, "frobnicate"],
        ["--config", micro_config, "train"],
        ["--config", micro_config, "train", "resnet"],
        ["--config", micro_config, "study", "unknown"],
        ["mesh"],
    ):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_out_dir_precedence(micro_config, tmp_path, monkeypatch):
    cfg = load_config(micro_config)
    monkeypatch.delenv("VIBEFUSE_OUT", raising=False)
    assert resolve_out_dir("cli_dir", cfg) == "cli_dir"
    assert resolve_out_dir(None, cfg) == "out"
    monkeypatch.setenv("VIBEFUSE_OUT", str(tmp_path / "env_dir"))
    assert resolve_out_dir(None, cfg) == str(tmp_path / "env_dir")
    assert resolve_out_dir("cli_dir", cfg) == "cli_dir"

    io_cfg = dict(MICRO)
    io_cfg["io"] = {"out_dir": "cfg_dir"}
    path = tmp_path / "with_io.json"
    path.write_text(json.dumps(io_cfg))
    cfg2 = load_config(path)
    assert resolve_out_dir(None, cfg2) == "cfg_dir"
    assert resolve_out_dir("cli_dir", cfg2) == "cli_dir"


def test_env_out_dir_used_by_cli(micro_config, tmp_path, monkeypatch, capsys):
    target = tmp_path / "from_env"
    monkeypatch.setenv("VIBEFUSE_OUT", str(target))
    assert main(["--config", micro_config, "sample"]) == 0
    capsys.readouterr()
    assert (target / "samples.csv").exists()


def test_seed_override_changes_samples(micro_config, tmp_path, capsys):
    a1 = tmp_path / "a1"
    a2 = tmp_path / "a2"
    b = tmp_path / "b"
    for out, seed in ((a1, "11"), (a2, "11"), (b, "99")):
        assert run(micro_config, out, "--seed", seed, "sample") == 0
    capsys.readouterr()
    bytes_a1 = (a1 / "samples.csv").read_bytes()
    assert bytes_a1 == (a2 / "samples.csv").read_bytes()
    assert bytes_a1 != (b / "samples.csv").read_bytes()


def test_module_entry_point(micro_config, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vibefuse.cli", "--config", micro_config,
         "--out", str(tmp_path / "sub"), "mesh"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "model_info.json" in proc.stdout
