import json

import numpy as np
import pytest

from magpen.trace import COLUMNS, SessionTrace


def _fill(trace, n=5):
    for i in range(n):
        trace.append(**{c: float(i) if c == "t" else 0.25 * i for c in COLUMNS})
    return trace


def test_append_requires_increasing_time():
    trace = _fill(SessionTrace(), 3)
    with pytest.raises(ValueError):
        trace.append(**{c: 1.0 for c in COLUMNS})


def test_csv_roundtrip(tmp_path):
    trace = _fill(SessionTrace())
    f = tmp_path / "trace.csv"
    trace.to_csv(f)
    loaded = SessionTrace.from_csv(f)
    assert loaded.rows == trace.rows
    header = f.read_text().splitlines()[0]
    assert header == ",".join(COLUMNS)


def test_jsonl_matches_columns(tmp_path):
    trace = _fill(SessionTrace())
    f = tmp_path / "trace.jsonl"
    trace.to_jsonl(f)
    lines = [json.loads(line) for line in f.read_text().splitlines()]
    assert len(lines) == len(trace)
    assert set(lines[0]) == set(COLUMNS)


def test_validate_catches_bad_alpha():
    trace = SessionTrace()
    row = {c: 0.0 for c in COLUMNS}
    row["alpha"] = 1.5
    trace.append(**row)
    with pytest.raises(ValueError, match="alpha"):
        trace.validate()


def test_columns_and_points():
    trace = _fill(SessionTrace())
    assert trace.column("t").tolist() == [0, 1, 2, 3, 4]
    assert trace.points("pen").shape == (5, 2)
