import json

import pytest

import moment_ident as mi
from moment_ident.cli import main

from conftest import make_scenario

CK = mi.ChangeKind


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(mi.scenario_to_toml(make_scenario(CK.GAMMA)))
    return str(path)


@pytest.fixture
def dataset_file(tmp_path):
    s = make_scenario(CK.GAMMA)
    path = tmp_path / "data.csv"
    mi.simulate(s, 50_000, seed=11).to_csv(path)
    return str(path)


class TestSimulateCommand:
    def test_writes_dataset(self, capsys, tmp_path, scenario_file):
        out_path = tmp_path / "data.csv"
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file,
            "--n", "100", "--seed", "5", "--out", str(out_path),
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["n_per_env"] == 100
        data = mi.EnvPairDataset.from_csv(out_path)
        assert data.t1.size == 100

    def test_invalid_n_is_machine_readable(self, capsys, tmp_path, scenario_file):
        code, out, err = run_cli(
            capsys, "simulate", "--scenario", scenario_file,
            "--n", "1", "--out", str(tmp_path / "d.csv"),
        )
        assert code == 1
        assert out == ""
        assert json.loads(err)["error"] == "ValueError"

    def test_negative_seed_rejected(self, capsys, tmp_path, scenario_file):
        code, _, err = run_cli(
            capsys, "simulate", "--scenario", scenario_file,
            "--n", "10", "--seed", "-3", "--out", str(tmp_path / "d.csv"),
        )
        assert code == 2
        assert "seed" in json.loads(err)["message"]

    def test_missing_scenario(self, capsys, tmp_path):
        code, out, err = run_cli(
            capsys, "simulate", "--scenario", str(tmp_path / "nope.toml"),
            "--n", "10", "--out", str(tmp_path / "d.csv"),
        )
        assert code != 0
        assert out == ""
        assert json.loads(err)["error"] == "usage"
        assert not (tmp_path / "d.csv").exists()


class TestEstimateCommand:
    def test_gamma_change(self, capsys, dataset_file):
        code, out, _ = run_cli(capsys, "estimate", "--input", dataset_file,
                               "--change", "gamma")
        assert code == 0
        payload = json.loads(out)
        assert payload["method"] == "alg3"
        assert abs(payload["beta_hat"] - 0.65) < 0.15

    def test_auto_unique(self, capsys, dataset_file):
        code, out, _ = run_cli(capsys, "estimate", "--input", dataset_file)
        assert code == 0
        payload = json.loads(out)
        assert payload["method"] == "alg3"
        assert payload["diagnostics"]["verdict"]["source"] == "gamma"

    def test_auto_candidates_on_noise_change(self, capsys, tmp_path):
        s = make_scenario(CK.EPS_T)
        path = tmp_path / "noise.csv"
        mi.simulate(s, 50_000, seed=12).to_csv(path)
        code, out, _ = run_cli(capsys, "estimate", "--input", str(path))
        assert code == 0
        payload = json.loads(out)
        assert payload["method"] == "auto"
        assert len(payload["candidates"]) == 2
        assert "beta_hat" not in payload

    def test_auto_eps_y_rejected(self, capsys, tmp_path):
        s = make_scenario(CK.EPS_Y)
        path = tmp_path / "epsy.csv"
        mi.simulate(s, 50_000, seed=13).to_csv(path)
        code, _, err = run_cli(capsys, "estimate", "--input", str(path))
        assert code == 1
        assert json.loads(err)["error"] == "NonIdentifiableError"

    def test_missing_input(self, capsys, tmp_path):
        code, out, err = run_cli(
            capsys, "estimate", "--input", str(tmp_path / "none.csv")
        )
        assert code != 0
        assert out == ""
        assert "not found" in json.loads(err)["message"]

    def test_estimation_error_is_machine_readable(self, capsys, dataset_file):
        # alg1 cannot see a gamma change
        code, out, err = run_cli(capsys, "estimate", "--input", dataset_file,
                                 "--change", "eps_t")
        assert code == 1
        assert json.loads(err)["error"] == "NoMomentDifferenceError"

    def test_bad_change_flag(self, capsys, dataset_file):
        with pytest.raises(SystemExit) as exc:
            main(["estimate", "--input", dataset_file, "--change", "delta"])
        assert exc.value.code == 2


class TestDetectCommand:
    def test_verdict(self, capsys, dataset_file):
        code, out, _ = run_cli(capsys, "detect", "--input", dataset_file)
        assert code == 0
        payload = json.loads(out)
        assert payload["source"] == "gamma"
        assert "q1" in payload["evidence"] or "e_ty_moved" in payload["evidence"]


class TestOracleCommand:
    def test_exact_recovery(self, capsys, scenario_file):
        code, out, _ = run_cli(capsys, "oracle", "--scenario", scenario_file)
        assert code == 0
        payload = json.loads(out)
        assert payload["abs_error"] <= 1e-9
        assert payload["report"]["method"] == "alg3"

    def test_change_override(self, capsys, scenario_file):
        code, out, err = run_cli(capsys, "oracle", "--scenario", scenario_file,
                                 "--change", "eps_t")
        assert code == 1  # gamma scenario has identical T moments
        assert json.loads(err)["error"] == "NoMomentDifferenceError"


class TestExperimentCommand:
    def test_end_to_end(self, capsys, tmp_path):
        cfg_path = tmp_path / "exp.toml"
        out_path = tmp_path / "results.csv"
        cfg_path.write_text(
            "\n".join(
                [
                    'change = "eps_t"',
                    "sample_sizes = [512, 1024]",
                    "replicates = 2",
                    'methods = ["alg1", "ols_combined"]',
                    "seed = 3",
                ]
            )
        )
        code, out, _ = run_cli(capsys, "experiment", "--config", str(cfg_path),
                               "--out", str(out_path))
        assert code == 0
        payload = json.loads(out)
        assert payload["rows"] == 8
        assert out_path.exists()

    def test_missing_output_path(self, capsys, tmp_path):
        cfg_path = tmp_path / "exp.toml"
        cfg_path.write_text('change = "eps_t"\nreplicates = 1\nsample_sizes = [512]\n')
        code, _, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
        assert code != 0
        assert "output path" in json.loads(err)["message"]

    def test_bad_config(self, capsys, tmp_path):
        cfg_path = tmp_path / "exp.toml"
        cfg_path.write_text('change = "eps_t"\nsample_sizes = [1024, 512]\n')
        code, _, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
        assert code != 0
        assert json.loads(err)["error"] == "usage"
