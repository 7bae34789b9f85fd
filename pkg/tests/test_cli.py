import json
import os

import numpy as np
import pandas as pd
import pytest

from netspill.cli import main


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--preset", "valid-iv", "--seed", "7",
                 "--n-firms", "1500", "--out", str(out)])
    assert code == 0
    return out


class TestSimulate:
    def test_files_and_manifest(self, sim_dir):
        for name in ("edges.csv", "attributes.csv", "imports.csv", "truth.csv",
                     "manifest.json"):
            assert (sim_dir / name).exists()
        manifest = json.loads((sim_dir / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert "config_sha256" in manifest and "versions" in manifest

    def test_truth_holds_parameters(self, sim_dir):
        truth = pd.read_csv(sim_dir / "truth.csv")
        params = dict(zip(truth["parameter"], truth["value"]))
        assert float(params["beta_d"]) == 0.05
        assert float(params["beta_u"]) == 0.10

    def test_seed_required(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["simulate", "--out", str(tmp_path)])


class TestBuildPanel:
    def test_panel_artifacts(self, sim_dir, tmp_path):
        out = tmp_path / "panel"
        assert main(["build-panel", "--data", str(sim_dir), "--out", str(out)]) == 0
        panel = pd.read_csv(out / "panel.csv")
        assert {"firm", "origin", "year", "y"} <= set(panel.columns)
        assert set(panel["origin"]) == {"EU", "nonEU"}
        assert (out / "id_map.csv").exists()
        summary = pd.read_csv(out / "network_summary.csv")
        assert "stable_edges" in set(summary["key"])


class TestEstimate:
    def test_col5_footer(self, sim_dir, tmp_path, capsys):
        out = tmp_path / "col5"
        assert main(["estimate", "--data", str(sim_dir), "--spec", "s1-col5",
                     "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "id-y" in text and "eu-s-z-y" in text
        for name in ("results.csv", "diagnostics.csv", "drops.csv", "table.txt",
                     "manifest.json"):
            assert (out / name).exists()
        drops = pd.read_csv(out / "drops.csv")
        ledger = dict(zip(drops["reason"], drops["rows"]))
        consumed = sum(v for k, v in ledger.items()
                       if k not in ("rows_initial", "rows_estimated"))
        assert ledger["rows_initial"] - consumed == ledger["rows_estimated"]

    def test_iv_runs_with_diagnostics(self, sim_dir, tmp_path, capsys):
        out = tmp_path / "iv"
        assert main(["estimate", "--data", str(sim_dir), "--spec", "iv-t2",
                     "--out", str(out)]) == 0
        text = capsys.readouterr().out
        for row in ("widstat", "j", "jp"):
            assert row in text

    def test_heterogeneity_flag(self, sim_dir, tmp_path):
        out = tmp_path / "h1"
        assert main(["estimate", "--data", str(sim_dir), "--spec", "h1",
                     "--characteristic", "workers", "--out", str(out)]) == 0

    def test_missing_data_surfaces_stage_error(self, tmp_path, capsys):
        code = main(["estimate", "--data", str(tmp_path / "nowhere"),
                     "--spec", "s1-col5", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "[netcore]" in capsys.readouterr().err

    def test_pooled_firm_year_config_error(self, tmp_path, capsys):
        from netspill.treatment import DesignSpec
        with pytest.raises(ValueError, match="firm-by-year"):
            DesignSpec("iv-pooled-t2", factors=("id-y", "s-z-y")).resolve()

    def test_unknown_spec_clean_error(self, sim_dir, tmp_path, capsys):
        code = main(["estimate", "--data", str(sim_dir), "--spec", "nope",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        err = capsys.readouterr().err
        assert "[treatment]" in err and "hint" in err


class TestReportCommand:
    def test_ladder_from_directories(self, sim_dir, tmp_path, capsys):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["estimate", "--data", str(sim_dir), "--spec", "s1-col3", "--out", str(out1)])
        main(["estimate", "--data", str(sim_dir), "--spec", "s1-col5", "--out", str(out2)])
        capsys.readouterr()
        table_path = tmp_path / "ladder.txt"
        assert main(["report", "--results", str(out1), str(out2),
                     "--out", str(table_path)]) == 0
        text = table_path.read_text()
        assert "ybar_D_t1" in text
        assert "clustering variable" in text


class TestMonteCarloCommand:
    def test_summary_and_determinism(self, tmp_path):
        args = ["montecarlo", "--regimes", "valid-iv", "--spec", "iv-t2",
                "--reps", "3", "--seed", "5", "--n-firms", "1200"]
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        os.environ["NETSPILL_JOBS"] = "1"
        assert main(args + ["--out", str(out1)]) == 0
        os.environ["NETSPILL_JOBS"] = "2"
        assert main(args + ["--out", str(out2)]) == 0
        os.environ.pop("NETSPILL_JOBS")
        a = (out1 / "reps_valid-iv.csv").read_bytes()
        b = (out2 / "reps_valid-iv.csv").read_bytes()
        assert a == b
        summary = pd.read_csv(out1 / "summary.csv")
        assert {"coefficient", "bias", "coverage"} <= set(summary.columns)
