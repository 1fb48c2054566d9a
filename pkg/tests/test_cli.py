import hashlib
import json
import os

import numpy as np
import pytest

from lstmcluster import pipeline
from lstmcluster.cli import main
from lstmcluster.corpus import load_corpus, read_forecast_csv
from lstmcluster.lstm import TrainingDivergence
from lstmcluster.synthetic import two_regime_corpus

FAST = ["--cell-dim", "10", "--epoch-size", "40", "--max-epochs", "10", "--minibatch-size", "4",
        "--restarts", "2", "--jobs", "1"]


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    corpus, _ = two_regime_corpus(n_series=12, length=48, horizon=6, seed=2)
    generic = d / "corpus.csv"
    cif = d / "cif.csv"
    with open(generic, "w") as g, open(cif, "w") as c:
        for s in corpus:
            vals = ",".join(repr(float(v)) for v in s.values)
            g.write(f"{s.id},12,6,{vals}\n")
            c.write(f"{s.id};6;12;{vals.replace(',', ';')}\n")
    return str(generic), str(cif)


def lines(path):
    return [ln for ln in open(path).read().splitlines() if ln]


def test_ingest_and_features(data, tmp_path):
    generic, _ = data
    before = sha(generic)
    assert main(["ingest", "--dataset", generic, "--out", str(tmp_path / "i")]) == 0
    back = load_corpus(str(tmp_path / "i" / "corpus.csv"), "generic")
    assert len(back) == 12 and sha(generic) == before
    assert main(["features", "--dataset", generic, "--out", str(tmp_path / "f")]) == 0
    rows = lines(tmp_path / "f" / "features.csv")
    assert rows[0].startswith("#") and rows[1].split(",")[0] == "id"
    assert len(rows[1].split(",")) == 19 and len(rows) == 14


def test_cluster_and_prep(data, tmp_path):
    generic, _ = data
    assert main(["cluster", "--dataset", generic, "--restarts", "2",
                 "--out", str(tmp_path / "c")]) == 0
    rows = lines(tmp_path / "c" / "clusters.csv")
    assert rows[0] == "# lstmcluster groups v1" and rows[1] == "id,cluster" and len(rows) == 14
    assert main(["prep", "--dataset", generic, "--grouping", "all",
                 "--out", str(tmp_path / "p")]) == 0
    files = sorted(os.listdir(tmp_path / "p" / "patches"))
    assert files == ["all.train.csv", "all.validation.csv"]


def test_forecast_cif_happy_path(data, tmp_path):
    _, cif = data
    out = tmp_path / "fc"
    assert main(["forecast", "--dataset", cif, "--format", "cif", "--grouping", "cluster",
                 "--seed", "7", "--out", str(out)] + FAST) == 0
    fc = read_forecast_csv(str(out / "forecasts.csv"))
    assert len(fc) == 12 and all(len(v) == 6 for v in fc.values())
    m = json.load(open(out / "manifest.json"))
    assert m["command"] == "forecast" and m["config"]["seed"] == 7
    assert "forecasts.csv" in m["outputs"] and m["grouping"]["strategy"] == "cluster"


def test_train_then_forecast_from_models(data, tmp_path):
    generic, _ = data
    common = ["--dataset", generic, "--grouping", "horizon", "--seed", "3"] + FAST
    assert main(["train", "--out", str(tmp_path / "t")] + common) == 0
    assert os.path.exists(tmp_path / "t" / "models" / "h6.npz")
    assert main(["forecast", "--models", str(tmp_path / "t"),
                 "--out", str(tmp_path / "a")] + common) == 0
    assert main(["forecast", "--out", str(tmp_path / "b")] + common) == 0
    assert sha(tmp_path / "a" / "forecasts.csv") == sha(tmp_path / "b" / "forecasts.csv")


def test_ro_one_origin_equals_fo(data, tmp_path):
    generic, _ = data
    common = ["evaluate", "--dataset", generic, "--methods", "all,horizon"] + FAST
    assert main(common + ["--setup", "ro", "--origins", "1", "--out", str(tmp_path / "ro")]) == 0
    assert main(common + ["--setup", "fo", "--out", str(tmp_path / "fo")]) == 0
    assert sha(tmp_path / "ro" / "report.csv") == sha(tmp_path / "fo" / "report.csv")
    report = open(tmp_path / "fo" / "report.txt").read()
    assert "Naive.Seasonal" in report and "Wilcoxon" in report


def test_evaluate_external_forecasts(data, tmp_path):
    generic, _ = data
    corpus = load_corpus(generic, "generic")
    ext = tmp_path / "ext.csv"
    with open(ext, "w") as fh:
        for s in corpus:
            f = np.full(6, s.values[-7])
            fh.write("ETS," + s.id + "," + ",".join(map(str, f)) + "\n")
    out = tmp_path / "e"
    assert main(["evaluate", "--dataset", generic, "--methods", "all", "--forecasts", str(ext),
                 "--out", str(out)] + FAST) == 0
    names = [ln.split(",")[0] for ln in lines(out / "report.csv")[2:]]
    assert sorted(names) == ["ETS", "LSTM.All", "Naive.Seasonal"]


def test_replay_identical_and_changed_input(data, tmp_path):
    generic, _ = data
    local = tmp_path / "d.csv"
    local.write_text(open(generic).read())
    out = tmp_path / "run"
    assert main(["forecast", "--dataset", str(local), "--grouping", "all",
                 "--out", str(out)] + FAST) == 0
    assert main(["replay", "--manifest", str(out / "manifest.json")]) == 0
    assert sha(out / "replay" / "forecasts.csv") == sha(out / "forecasts.csv")
    local.write_text(open(generic).read().replace("S001", "S999"))
    assert main(["replay", "--manifest", str(out / "manifest.json")]) == 2


def test_config_file_and_flag_precedence(data, tmp_path):
    generic, _ = data
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text(f"[run]\ndataset = {generic}\ncell_dim = 12\nseed = 1\n"
                       "grouping = all\nepoch_size = 40\nmax_epochs = 10\n"
                       "[forecast]\nseed = 5\n")
    out = tmp_path / "cf"
    assert main(["forecast", "--config", str(cfgfile), "--seed", "6", "--jobs", "1",
                 "--out", str(out)]) == 0
    cfg = json.load(open(out / "manifest.json"))["config"]
    assert cfg["cell_dim"] == 12 and cfg["seed"] == 6 and cfg["grouping"] == "all"
    out2 = tmp_path / "cf2"
    assert main(["forecast", "--config", str(cfgfile), "--jobs", "1", "--out", str(out2)]) == 0
    assert json.load(open(out2 / "manifest.json"))["config"]["seed"] == 5


def test_trend_demo(tmp_path):
    out = tmp_path / "trend"
    assert main(["trend-demo", "--out", str(out)]) == 0
    rows = lines(out / "trend_report.csv")
    assert len(rows) == 18 and rows[-1].endswith(",1")


@pytest.mark.parametrize("argv, code", [
    (["forecast", "--dataset", "X", "--lr-per-sample", "5"], 1),
    (["forecast", "--dataset", "missing.csv"], 2),
    (["bogus"], 1),
    (["forecast", "--dataset", "X", "--budget", "1"], 1),
    (["forecast"], 1),
    (["evaluate", "--dataset", "X", "--methods", "all,nope"], 1),
])
def test_exit_codes(argv, code, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "bogus" else argv) == code
    err = capsys.readouterr().err
    assert err.strip() and len(err.strip().splitlines()[-1]) > 0


def test_malformed_dataset_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("s1,12,6,1,2,abc\n")
    assert main(["ingest", "--dataset", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "s1" in capsys.readouterr().err


def test_divergence_exit_code(data, tmp_path, monkeypatch, capsys):
    generic, _ = data

    def boom(*a, **k):
        raise TrainingDivergence("non-finite loss")

    monkeypatch.setattr(pipeline, "train", boom)
    assert main(["forecast", "--dataset", generic, "--grouping", "horizon",
                 "--out", str(tmp_path)] + FAST) == 3
    assert "h6" in capsys.readouterr().err
