"""Loading, validation and serialization of time series databases."""

from dataclasses import dataclass, field, replace
import csv
import logging
import math
import os

import numpy as np

log = logging.getLogger(__name__)

FORMATS = ("cif", "nn5", "generic")
CORPUS_HEADER = "# lstmcluster corpus v1"
FORECAST_HEADER = "# lstmcluster forecasts v1"
_MISSING = {"", "na", "nan", "n/a", "null", "?"}


class CorpusError(ValueError):
    """Raised for any malformed or inconsistent dataset input."""


@dataclass(frozen=True, eq=False)
class TimeSeries:
    id: str
    values: np.ndarray
    frequency: int
    horizon: int
    is_integer_valued: bool = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise CorpusError(f"series {self.id!r}: empty series")
        if not np.all(np.isfinite(values)):
            raise CorpusError(f"series {self.id!r}: non-finite values")
        if int(self.frequency) < 1 or int(self.horizon) < 1:
            raise CorpusError(f"series {self.id!r}: frequency and horizon must be >= 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frequency", int(self.frequency))
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.is_integer_valued is None:
            object.__setattr__(self, "is_integer_valued",
                               bool(np.all(values == np.round(values))))

    def __len__(self):
        return self.values.size

    def head(self, n):
        """The first ``n`` observations as a new series."""
        return replace(self, values=self.values[:n], is_integer_valued=None)


@dataclass(frozen=True)
class Corpus:
    name: str
    series: dict = field(default_factory=dict)

    def __post_init__(self):
        freqs = {s.frequency for s in self.series.values()}
        if len(freqs) > 1:
            raise CorpusError(f"corpus {self.name!r}: mixed frequencies {sorted(freqs)}")

    @classmethod
    def from_series(cls, name, series):
        out = {}
        for s in series:
            if s.id in out:
                raise CorpusError(f"duplicate series id {s.id!r}")
            out[s.id] = s
        return cls(name, out)

    def __len__(self):
        return len(self.series)

    def __iter__(self):
        return iter(self.series.values())

    def __getitem__(self, sid):
        return self.series[sid]

    @property
    def ids(self):
        return list(self.series)

    @property
    def frequency(self):
        return next(iter(self.series.values())).frequency if self.series else 1

    def subset(self, ids):
        return Corpus(self.name, {i: self.series[i] for i in ids})

    def map(self, fn):
        return Corpus(self.name, {i: fn(s) for i, s in self.series.items()})


@dataclass(frozen=True)
class ExternalForecastSet:
    method_name: str
    forecasts: dict


def repair_missing(values, sid="?"):
    """Trim leading/trailing gaps and linearly interpolate interior ones.

    ``values`` is a float array with NaN marking missing observations.
    """
    values = np.asarray(values, dtype=float)
    observed = np.flatnonzero(~np.isnan(values))
    if observed.size == 0:
        raise CorpusError(f"series {sid!r}: empty series")
    values = values[observed[0]: observed[-1] + 1]
    gaps = np.isnan(values)
    if gaps.any():
        idx = np.arange(values.size)
        values = values.copy()
        values[gaps] = np.interp(idx[gaps], idx[~gaps], values[~gaps])
    return values


def _parse_value(tok, sid, lineno):
    tok = tok.strip()
    if tok.lower() in _MISSING:
        return math.nan
    try:
        v = float(tok)
    except ValueError:
        raise CorpusError(f"line {lineno}: series {sid!r}: non-numeric value {tok!r}") from None
    if not math.isfinite(v):
        raise CorpusError(f"line {lineno}: series {sid!r}: non-finite value {tok!r}")
    return v


def _parse_int(tok, what, lineno):
    try:
        v = int(tok.strip())
    except ValueError:
        raise CorpusError(f"line {lineno}: malformed {what} {tok!r}") from None
    if v < 1:
        raise CorpusError(f"line {lineno}: {what} must be >= 1, got {v}")
    return v


def _data_lines(path):
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def _load_rows(path, delimiter, order):
    series = []
    for lineno, line in _data_lines(path):
        row = next(csv.reader([line], delimiter=delimiter))
        while row and not row[-1].strip():
            row.pop()
        if len(row) < 4:
            raise CorpusError(f"line {lineno}: malformed row (need id, two integers, >= 1 value)")
        sid = row[0].strip()
        if not sid:
            raise CorpusError(f"line {lineno}: empty series id")
        a = _parse_int(row[1], order[0], lineno)
        b = _parse_int(row[2], order[1], lineno)
        meta = dict(zip(order, (a, b)))
        vals = [_parse_value(t, sid, lineno) for t in row[3:]]
        series.append(TimeSeries(sid, repair_missing(vals, sid),
                                 meta["frequency"], meta["horizon"]))
    return series


def _load_nn5(path, frequency, horizon):
    lines = list(_data_lines(path))
    if not lines:
        raise CorpusError("NN5 file has no header row")
    header = next(csv.reader([lines[0][1]]))
    ids = [h.strip() for h in header]
    if any(not i for i in ids):
        raise CorpusError(f"line {lines[0][0]}: empty series id in header")
    cols = [[] for _ in ids]
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) > len(ids):
            raise CorpusError(f"line {lineno}: malformed row ({len(row)} cells, {len(ids)} series)")
        row = row + [""] * (len(ids) - len(row))
        for c, tok in enumerate(row):
            cols[c].append(_parse_value(tok, ids[c], lineno))
    return [TimeSeries(sid, repair_missing(col, sid), frequency, horizon)
            for sid, col in zip(ids, cols)]


def load_corpus(path, format, name=None, frequency=None, horizon=None):
    """Read a dataset file into a validated :class:`Corpus`.

    ``cif`` rows are ``id;horizon;frequency;v1;...``; ``generic`` rows are
    ``id,frequency,horizon,v1,...``; ``nn5`` is one column per series under a
    header of ids (frequency defaults to 7, horizon to 56).
    """
    if format not in FORMATS:
        raise CorpusError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    if not os.path.exists(path):
        raise CorpusError(f"dataset file not found: {path}")
    if format == "cif":
        series = _load_rows(path, ";", ("horizon", "frequency"))
    elif format == "generic":
        series = _load_rows(path, ",", ("frequency", "horizon"))
    else:
        series = _load_nn5(path, frequency or 7, horizon or 56)
    if format != "nn5" and (frequency or horizon):
        series = [replace(s, frequency=frequency or s.frequency,
                          horizon=horizon or s.horizon) for s in series]
    if not series:
        raise CorpusError(f"{path}: no series found")
    name = name or os.path.splitext(os.path.basename(path))[0]
    return Corpus.from_series(name, series)


def write_corpus(corpus, path):
    """Write ``corpus`` in the generic layout; reloading is bit-exact."""
    with open(path, "w", newline="") as fh:
        fh.write(CORPUS_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for s in corpus:
            w.writerow([s.id, s.frequency, s.horizon] + [repr(float(v)) for v in s.values])


def train_test_split(series):
    """Withhold the final ``horizon`` observations as the test set."""
    h = series.horizon
    if len(series) <= h:
        raise CorpusError(f"series {series.id!r}: length {len(series)} too short to withhold {h}")
    return series.head(len(series) - h), series.values[-h:].copy()


def split_corpus(corpus):
    """Apply :func:`train_test_split` to every series."""
    train, test = {}, {}
    for s in corpus:
        train[s.id], test[s.id] = train_test_split(s)
    return Corpus(corpus.name, train), test


def load_forecasts(path, corpus=None):
    """Read ``method,series_id,f1,...`` rows into per-method forecast sets."""
    sets = {}
    for lineno, line in _data_lines(path):
        row = [t for t in next(csv.reader([line]))]
        while row and not row[-1].strip():
            row.pop()
        if len(row) < 3:
            raise CorpusError(f"line {lineno}: malformed forecast row")
        method, sid = row[0].strip(), row[1].strip()
        vals = np.array([_parse_value(t, sid, lineno) for t in row[2:]])
        if np.isnan(vals).any():
            raise CorpusError(f"line {lineno}: missing forecast value for {sid!r}")
        if corpus is not None:
            if sid not in corpus.series:
                raise CorpusError(f"line {lineno}: unknown series {sid!r}")
            if vals.size != corpus[sid].horizon:
                raise CorpusError(f"line {lineno}: {method}/{sid}: {vals.size} values, "
                                  f"horizon is {corpus[sid].horizon}")
        fs = sets.setdefault(method, {})
        if sid in fs:
            raise CorpusError(f"line {lineno}: duplicate forecast {method}/{sid}")
        fs[sid] = vals
    return {m: ExternalForecastSet(m, f) for m, f in sets.items()}


def write_forecasts(forecasts, path, method=None):
    """Write ``series_id,f1,...`` rows (prefixed by ``method`` when given)."""
    with open(path, "w", newline="") as fh:
        fh.write(FORECAST_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for sid, vals in forecasts.items():
            prefix = [method, sid] if method else [sid]
            w.writerow(prefix + [repr(float(v)) for v in vals])


def read_forecast_csv(path):
    """Inverse of :func:`write_forecasts` without a method column."""
    out = {}
    for lineno, line in _data_lines(path):
        row = next(csv.reader([line]))
        out[row[0]] = np.array([float(v) for v in row[1:]])
    return out
