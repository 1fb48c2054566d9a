import numpy as np
import pytest
from hypothesis import given, strategies as st

from lstmcluster.corpus import (Corpus, CorpusError, TimeSeries, load_corpus, load_forecasts,
                                read_forecast_csv, repair_missing, split_corpus,
                                train_test_split, write_corpus, write_forecasts)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_cif_row(tmp_path):
    c = load_corpus(_write(tmp_path, "a.csv", "s1;12;12;1;2;3\n"), "cif")
    assert c.ids == ["s1"]
    assert c["s1"].values.tolist() == [1.0, 2.0, 3.0]
    assert c["s1"].horizon == 12 and c["s1"].frequency == 12


def test_cif_mixed_horizons(tmp_path):
    rows = [f"ts{i};12;12;" + ";".join(str(v) for v in range(1, 40)) for i in range(57)]
    rows += [f"short{i};6;12;" + ";".join(str(v) for v in range(1, 20)) for i in range(15)]
    c = load_corpus(_write(tmp_path, "cif.csv", "\n".join(rows) + "\n"), "cif")
    hs = [s.horizon for s in c]
    assert len(c) == 72 and hs.count(12) == 57 and hs.count(6) == 15


def test_nn5_interior_gap_interpolated(tmp_path):
    text = "a,b\n1,10\n2,\n,30\n4,40\n5,50\n"
    c = load_corpus(_write(tmp_path, "nn5.csv", text), "nn5")
    assert c["a"].values.tolist() == [1, 2, 3, 4, 5]
    assert c["b"].values.tolist() == [10, 20, 30, 40, 50]
    assert c.frequency == 7 and c["a"].horizon == 56


def test_generic_and_trimming(tmp_path):
    c = load_corpus(_write(tmp_path, "g.csv", "# comment\nx,4,2,NA,1,2,,4,na\n"), "generic")
    assert c["x"].values.tolist() == [1, 2, 3, 4]
    assert c["x"].frequency == 4 and c["x"].horizon == 2


@pytest.mark.parametrize("text, fmt", [
    ("s1;12;12;1;abc\n", "cif"),
    ("s1;12;12;1;2\ns1;12;12;3;4\n", "cif"),
    ("s1;12\n", "cif"),
    ("s1;12;12;na;na\n", "cif"),
    ("s1;0;12;1;2\n", "cif"),
])
def test_malformed_inputs_raise(tmp_path, text, fmt):
    with pytest.raises(CorpusError):
        load_corpus(_write(tmp_path, "bad.csv", text), fmt)


def test_unknown_format_and_missing_file(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(_write(tmp_path, "a.csv", "s1;1;1;1\n"), "excel")
    with pytest.raises(CorpusError):
        load_corpus(str(tmp_path / "nope.csv"), "cif")


def test_mixed_frequency_rejected():
    with pytest.raises(CorpusError):
        Corpus.from_series("x", [TimeSeries("a", [1, 2], 12, 1), TimeSeries("b", [1, 2], 7, 1)])


def test_integer_detection():
    assert TimeSeries("a", [1, 2, 3], 1, 1).is_integer_valued
    assert not TimeSeries("a", [1, 2.5], 1, 1).is_integer_valued


@pytest.mark.parametrize("n, h, ntrain", [(154, 24, 130), (13, 12, 1), (108, 12, 96)])
def test_split_lengths(n, h, ntrain):
    s = TimeSeries("a", np.arange(1, n + 1), 12, h)
    tr, te = train_test_split(s)
    assert len(tr) == ntrain and te.size == h
    assert np.array_equal(np.concatenate([tr.values, te]), s.values)


def test_split_too_short():
    with pytest.raises(CorpusError):
        train_test_split(TimeSeries("a", [1.0, 2.0], 1, 2))


@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30),
                min_size=1, max_size=5))
def test_round_trip_bit_exact(tmp_path_factory, rows):
    c = Corpus.from_series("rt", [TimeSeries(f"s{i}", r, 3, 2) for i, r in enumerate(rows)])
    p = str(tmp_path_factory.mktemp("rt") / "c.csv")
    write_corpus(c, p)
    back = load_corpus(p, "generic")
    for s in c:
        assert np.array_equal(back[s.id].values, s.values)
        assert back[s.id].values.tobytes() == s.values.tobytes()


@given(st.lists(st.one_of(st.floats(-100, 100), st.just(float("nan"))), min_size=1, max_size=40))
def test_repair_preserves_observed(values):
    arr = np.array(values, dtype=float)
    if np.isnan(arr).all():
        with pytest.raises(CorpusError):
            repair_missing(arr)
        return
    out = repair_missing(arr)
    obs = np.flatnonzero(~np.isnan(arr))
    trimmed = arr[obs[0]: obs[-1] + 1]
    assert not np.isnan(out).any()
    keep = ~np.isnan(trimmed)
    assert np.array_equal(out[keep], trimmed[keep])


def test_forecast_files(tmp_path):
    c = Corpus.from_series("c", [TimeSeries("a", [1, 2, 3], 1, 2)])
    p = _write(tmp_path, "f.csv", "ets,a,1.5,2.5\n")
    fs = load_forecasts(p, c)
    assert np.array_equal(fs["ets"].forecasts["a"], [1.5, 2.5])
    with pytest.raises(CorpusError):
        load_forecasts(_write(tmp_path, "g.csv", "ets,a,1.5\n"), c)
    out = str(tmp_path / "w.csv")
    write_forecasts({"a": np.array([0.1, 1 / 3])}, out)
    assert np.array_equal(read_forecast_csv(out)["a"], [0.1, 1 / 3])


def test_split_corpus():
    c = Corpus.from_series("c", [TimeSeries("a", np.arange(10.0), 2, 3)])
    tr, te = split_corpus(c)
    assert len(tr["a"]) == 7 and te["a"].tolist() == [7, 8, 9]
