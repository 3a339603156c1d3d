import csv
import io
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import numpy.testing as npt
import pytest

from plscore import load_csv
from plscore.cli import main
from plscore.svg_report import SvgSchemaError, emit_svg


def svg_elements(text, local_tag):
    root = ET.fromstring(text)
    return [el for el in root.iter() if el.tag.split("}")[-1] == local_tag]


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def gaussian_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim_gauss")
    rc = main(
        ["simulate", "--n", "40", "--p", "5", "--family", "gaussian", "--seed", "7",
         "--out", str(d)]
    )
    assert rc == 0
    return str(d / "dataset.csv")


@pytest.fixture(scope="module")
def binomial_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim_binom")
    rc = main(
        ["simulate", "--n", "104", "--p", "33", "--family", "binomial", "--seed", "21",
         "--missing-frac", "0.3", "--out", str(d)]
    )
    assert rc == 0
    return str(d / "dataset.csv")


class TestSimulateCommand:
    def test_outputs_load_back(self, gaussian_dataset):
        X, y = load_csv(gaussian_dataset, response_col="y", family_="gaussian")
        assert X.values.shape == (40, 5)
        out_dir = os.path.dirname(gaussian_dataset)
        manifest = read_manifest(out_dir)
        assert set(manifest["outputs"]) == {"dataset.csv", "true_beta.csv"}
        assert manifest["seed"] == 7

    def test_true_beta_has_one_row_per_predictor(self, gaussian_dataset):
        path = os.path.join(os.path.dirname(gaussian_dataset), "true_beta.csv")
        rows = list(csv.reader(open(path, encoding="utf-8")))
        assert rows[0] == ["predictor", "beta"]
        assert len(rows) == 6


class TestCvCommand:
    def test_criteria_and_votes(self, gaussian_dataset, tmp_path):
        out = tmp_path / "cv"
        rc = main(
            ["cv", "--data", gaussian_dataset, "--response", "y", "--family", "gaussian",
             "--max-ncomp", "3", "--k", "5", "--repeats", "10", "--seed", "7",
             "--out", str(out)]
        )
        assert rc == 0
        rows = list(csv.reader(open(out / "criteria.csv", encoding="utf-8")))
        assert rows[0] == ["criterion", "0", "1", "2", "3"]
        labels = [r[0] for r in rows[1:]]
        assert "AIC" in labels and "Q² (5-CV)" in labels
        votes = list(csv.reader(open(out / "votes.csv", encoding="utf-8")))
        assert votes[0] == ["ncomp", "count", "frequency"]
        assert sum(int(r[1]) for r in votes[1:]) == 10
        assert (out / "cv_votes.svg").exists()
        assert (out / "criteria.json").exists()

    def test_no_figures_flag(self, gaussian_dataset, tmp_path):
        out = tmp_path / "cv_nofig"
        rc = main(
            ["cv", "--data", gaussian_dataset, "--response", "y", "--family", "gaussian",
             "--max-ncomp", "2", "--k", "4", "--repeats", "3", "--seed", "1",
             "--out", str(out), "--no-figures"]
        )
        assert rc == 0
        assert not (out / "cv_votes.svg").exists()


class TestBootstrapCommand:
    def test_forest_has_one_interval_per_predictor(self, binomial_dataset, tmp_path):
        out = tmp_path / "boot"
        rc = main(
            ["bootstrap", "--data", binomial_dataset, "--response", "y",
             "--family", "binomial", "--ncomp", "4", "--scheme", "yt", "--B", "200",
             "--ci", "bca", "--seed", "5", "--out", str(out)]
        )
        assert rc == 0
        text = (out / "ci_forest.svg").read_text(encoding="utf-8")
        intervals = [
            el for el in svg_elements(text, "line")
            if el.get("class") in ("sig", "nonsig")
        ]
        assert len(intervals) == 33
        stars = list(csv.reader(open(out / "beta_star.csv", encoding="utf-8")))
        assert len(stars) == 201  # header + B rows
        citab = list(csv.reader(open(out / "ci.csv", encoding="utf-8")))
        assert citab[0] == ["predictor", "estimate", "lower", "upper", "significant"]
        assert len(citab) == 34
        assert (out / "boxplots.svg").exists()

    def test_manifest_digests_reproduce(self, binomial_dataset, tmp_path):
        args = ["bootstrap", "--data", binomial_dataset, "--response", "y",
                "--family", "binomial", "--ncomp", "2", "--scheme", "yt", "--B", "150",
                "--ci", "percentile", "--seed", "9"]
        out1, out2 = tmp_path / "b1", tmp_path / "b2"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        m1, m2 = read_manifest(out1), read_manifest(out2)
        assert m1["outputs"] == m2["outputs"]

    def test_input_file_not_mutated(self, binomial_dataset, tmp_path):
        before = open(binomial_dataset, "rb").read()
        out = tmp_path / "b3"
        main(["bootstrap", "--data", binomial_dataset, "--response", "y",
              "--family", "binomial", "--ncomp", "1", "--scheme", "yt", "--B", "120",
              "--ci", "percentile", "--seed", "2", "--out", str(out)])
        assert open(binomial_dataset, "rb").read() == before


class TestStabilityCommand:
    def test_grid_and_pi_e(self, binomial_dataset, tmp_path):
        out = tmp_path / "stab"
        rc = main(
            ["stability", "--data", binomial_dataset, "--response", "y",
             "--family", "binomial", "--max-ncomp", "2", "--k", "4", "--repeats", "3",
             "--scheme", "yt", "--B", "150", "--ci", "percentile", "--seed", "3",
             "--out", str(out)]
        )
        assert rc == 0
        rows = list(csv.reader(open(out / "stability.csv", encoding="utf-8")))
        assert rows[0] == ["predictor", "H1", "H2", "pi_e"]
        assert len(rows) == 34
        pi = [float(r[-1]) for r in rows[1:]]
        assert all(0.0 <= v <= 1.0 for v in pi)
        text = (out / "sig_grid.svg").read_text(encoding="utf-8")
        cells = [el for el in svg_elements(text, "rect")]
        assert len(cells) == 33 * 2


class TestFitCommand:
    def test_model_json_and_biplot(self, binomial_dataset, tmp_path):
        out = tmp_path / "fit"
        rc = main(
            ["fit", "--data", binomial_dataset, "--response", "y", "--family", "binomial",
             "--ncomp", "2", "--seed", "1", "--out", str(out)]
        )
        assert rc == 0
        model = json.load(open(out / "model.json", encoding="utf-8"))
        assert model["ncomp"] == 2
        assert len(model["col_names"]) == 33
        assert len(model["beta_raw"]) == 34
        assert len(model["c"]) == 2
        assert (out / "biplot.svg").exists()

    def test_no_biplot_for_single_component(self, gaussian_dataset, tmp_path):
        out = tmp_path / "fit1"
        rc = main(
            ["fit", "--data", gaussian_dataset, "--response", "y", "--family", "gaussian",
             "--ncomp", "1", "--seed", "1", "--out", str(out)]
        )
        assert rc == 0
        assert not (out / "biplot.svg").exists()


class TestErrorPaths:
    def test_invalid_family_exit_2_no_files(self, gaussian_dataset, tmp_path, capsys):
        out = tmp_path / "bad"
        rc = main(
            ["fit", "--data", gaussian_dataset, "--response", "y", "--family", "gamma",
             "--ncomp", "1", "--seed", "1", "--out", str(out)]
        )
        assert rc == 2
        assert not out.exists()
        err = capsys.readouterr().err
        assert err.startswith("error: config:")
        assert err.count("\n") == 1

    def test_missing_seed_exit_2(self, gaussian_dataset, tmp_path):
        rc = main(
            ["fit", "--data", gaussian_dataset, "--response", "y", "--family", "gaussian",
             "--ncomp", "1", "--out", str(tmp_path / "x")]
        )
        assert rc == 2

    def test_missing_data_file_exit_2(self, tmp_path):
        rc = main(
            ["fit", "--data", str(tmp_path / "nope.csv"), "--response", "y",
             "--family", "gaussian", "--ncomp", "1", "--seed", "1",
             "--out", str(tmp_path / "x")]
        )
        assert rc == 2

    def test_data_error_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("y,a,b\n1,7,1\n0,7,2\n1,7,3\n", encoding="utf-8")
        rc = main(
            ["fit", "--data", str(bad), "--response", "y", "--family", "gaussian",
             "--ncomp", "1", "--seed", "1", "--out", str(tmp_path / "x")]
        )
        assert rc == 3
        assert capsys.readouterr().err.startswith("error: data:")

    def test_numerical_error_exit_4(self, tmp_path, capsys):
        # rank-2 predictors cannot support 4 components
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=20), rng.normal(size=20)
        lines = ["y,x1,x2,x3,x4"]
        for i in range(20):
            lines.append(
                f"{a[i] + b[i]},{a[i]},{b[i]},{a[i] + b[i]},{a[i] - b[i]}"
            )
        bad = tmp_path / "rank2.csv"
        bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
        rc = main(
            ["fit", "--data", str(bad), "--response", "y", "--family", "gaussian",
             "--ncomp", "4", "--seed", "1", "--out", str(tmp_path / "x")]
        )
        assert rc == 4
        assert capsys.readouterr().err.startswith("error: numerical:")

    def test_unknown_rule_exit_2(self, gaussian_dataset, tmp_path):
        rc = main(
            ["cv", "--data", gaussian_dataset, "--response", "y", "--family", "gaussian",
             "--max-ncomp", "2", "--rule", "magic", "--seed", "1",
             "--out", str(tmp_path / "x")]
        )
        assert rc == 2


class TestConfigFile:
    def test_config_file_with_flag_override(self, gaussian_dataset, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "\n".join([
                "# cv settings",
                f"data = {gaussian_dataset}",
                "response = y",
                "family = gaussian",
                "max-ncomp = 2",
                "k = 4",
                "repeats = 2",
                "seed = 11",
            ]) + "\n",
            encoding="utf-8",
        )
        out = tmp_path / "cfg_out"
        rc = main(["cv", "--config", str(cfg), "--repeats", "5", "--out", str(out)])
        assert rc == 0
        manifest = read_manifest(out)
        assert manifest["config"]["repeats"] == 5  # flag wins
        assert manifest["config"]["k"] == 4
        votes = list(csv.reader(open(out / "votes.csv", encoding="utf-8")))
        assert sum(int(r[1]) for r in votes[1:]) == 5

    def test_bad_config_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a pair\n", encoding="utf-8")
        rc = main(["cv", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert rc == 2


class TestEmitSvg:
    def test_byte_identical_for_same_payload(self):
        payload = {"h": [1, 2, 3], "freq": [0.2, 0.5, 0.3]}
        assert emit_svg("cv_votes", payload) == emit_svg("cv_votes", payload)

    def test_empty_forest_is_valid_svg(self):
        text = emit_svg("ci_forest", {"names": [], "lo": [], "hi": []})
        root = ET.fromstring(text)
        assert root.tag.endswith("svg")

    def test_forest_classifies_zero_crossing(self):
        text = emit_svg(
            "ci_forest", {"names": ["a", "b"], "lo": [-1.0, 0.5], "hi": [2.0, 1.5]}
        )
        lines = {el.get("class") for el in svg_elements(text, "line")}
        assert "nonsig" in lines and "sig" in lines

    def test_schema_mismatch(self):
        with pytest.raises(SvgSchemaError, match="missing keys"):
            emit_svg("ci_forest", {"names": ["a"]})
        with pytest.raises(SvgSchemaError, match="length mismatch"):
            emit_svg("cv_votes", {"h": [1, 2], "freq": [1.0]})
        with pytest.raises(SvgSchemaError, match="unknown figure kind"):
            emit_svg("pie", {})

    def test_sig_grid_handles_missing_rows(self):
        text = emit_svg(
            "sig_grid",
            {
                "names": ["a", "b"],
                "h_values": [1, 2],
                "sig": [[True, False], None],
                "pi_e": [0.6, 0.0],
            },
        )
        classes = [el.get("class") for el in svg_elements(text, "rect")]
        assert classes.count("cell-na") == 2
        assert classes.count("cell-on") == 1

    def test_biplot_schema(self):
        with pytest.raises(SvgSchemaError, match="one loading row"):
            emit_svg(
                "biplot",
                {"scores": [[0.0, 0.0]], "loadings": [[1.0, 2.0]], "col_names": ["a", "b"]},
            )
