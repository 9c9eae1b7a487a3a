import datetime as dt
import json

import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnforge.cdr_ingest import (
    CDR_COLUMNS,
    CdrRecord,
    CustomerId,
    DuplicateIdentity,
    EventKind,
    IngestError,
    InvalidField,
    Label,
    Operator,
    ParseReport,
    Rat,
    SchemaMismatch,
    UnknownEventKind,
    parse_cdr_file,
    parse_labels,
    parse_profiles,
    read_cdr_frame,
    record_to_row,
    records_to_frame,
    write_cdr_file,
    write_cdr_frame,
)

HEADER = ",".join(CDR_COLUMNS)


def _write(tmp_path, name, lines):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return p


def test_header_is_fixed():
    assert HEADER == "timestamp,caller,callee,event_kind,duration_s,bytes_up,bytes_down,rat,dropped,cell_id"


def test_call_row_maps_fields(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER, "2021-03-01T10:00:00Z,HOME:111,HOME:222,CALL,60,0,0,,0,C1"])
    (rec,) = list(parse_cdr_file(p))
    assert rec.event_kind is EventKind.CALL
    assert rec.duration_s == 60
    assert rec.caller == CustomerId(Operator.HOME, "111")
    assert rec.callee == CustomerId(Operator.HOME, "222")
    assert rec.timestamp == dt.datetime(2021, 3, 1, 10, tzinfo=dt.timezone.utc)
    assert rec.cell_id == "C1" and rec.rat is None and not rec.dropped


def test_unknown_event_kind_strict_reports_line(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER, "2021-03-01T10:00:00Z,HOME:1,HOME:2,CALL,1,0,0,,0,C",
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,FAX,0,0,0,,0,C"])
    with pytest.raises(UnknownEventKind) as exc:
        list(parse_cdr_file(p, strict=True))
    assert exc.value.line == 3


def test_lenient_mode_skips_and_reports(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER,
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,FAX,0,0,0,,0,C",
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,CALL,-5,0,0,,0,C",
                                   "not-a-time,HOME:1,HOME:2,SMS,0,0,0,,0,C",
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,SMS,0,0,0,,0,C"])
    report = ParseReport()
    recs = list(parse_cdr_file(p, report=report))
    assert len(recs) == 1
    assert [line for line, _ in report.errors] == [2, 3, 4]


def test_empty_file_with_header(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER])
    report = ParseReport()
    assert list(parse_cdr_file(p, report=report)) == []
    assert len(report) == 0
    assert len(read_cdr_frame(p)) == 0


def test_wrong_header_is_schema_mismatch(tmp_path):
    p = _write(tmp_path, "c.csv", ["timestamp,caller,callee", "x,y,z"])
    with pytest.raises(SchemaMismatch):
        list(parse_cdr_file(p))


@pytest.mark.parametrize("kwargs", [
    dict(event_kind=EventKind.SMS, duration_s=5.0),
    dict(event_kind=EventKind.CALL, bytes_up=10),
    dict(event_kind=EventKind.CALL, rat=Rat.G3),
    dict(event_kind=EventKind.SMS, dropped=True),
    dict(event_kind=EventKind.DATA),  # DATA with a callee
    dict(event_kind=EventKind.CALL, duration_s=-1.0),
])
def test_record_invariants(kwargs):
    base = dict(timestamp=dt.datetime(2021, 1, 1, tzinfo=dt.timezone.utc),
                caller=CustomerId(Operator.HOME, "1"), callee=CustomerId(Operator.HOME, "2"))
    base.update(kwargs)
    with pytest.raises(InvalidField):
        CdrRecord(**base)


def test_non_utc_timestamp_rejected():
    with pytest.raises(InvalidField):
        CdrRecord(dt.datetime(2021, 1, 1), CustomerId(Operator.HOME, "1"),
                  CustomerId(Operator.HOME, "2"), EventKind.SMS)


def test_profiles_duplicate_and_missing(tmp_path):
    p = _write(tmp_path, "p.csv", ["id,activation_date,birth_year,balance,gender",
                                   "HOME:1,2019-01-01,1980,,M",
                                   "HOME:2,2019-02-01,,12.5,F"])
    profs = parse_profiles(p)
    assert profs[0].attributes["balance"] is None
    assert profs[1].attributes["balance"] == 12.5
    assert profs[1].birth_year is None
    dup = _write(tmp_path, "d.csv", ["id,activation_date,birth_year",
                                     "HOME:1,2019-01-01,1980", "HOME:1,2019-01-01,1980"])
    with pytest.raises(DuplicateIdentity):
        parse_profiles(dup)


def test_labels(tmp_path):
    ok = _write(tmp_path, "l.csv", ["id,label", "HOME:1,CHURN", "HOME:2,ACTIVE"])
    assert [r.label for r in parse_labels(ok)] == [Label.CHURN, Label.ACTIVE]
    bad = _write(tmp_path, "b.csv", ["id,label", "HOME:1,MAYBE"])
    with pytest.raises(IngestError):
        parse_labels(bad, strict=True)
    dup = _write(tmp_path, "d.csv", ["id,label", "HOME:1,CHURN", "HOME:1,ACTIVE"])
    with pytest.raises(DuplicateIdentity):
        parse_labels(dup)


# --- round trips ----------------------------------------------------------

_ids = st.builds(CustomerId, st.sampled_from(list(Operator)), st.from_regex(r"[0-9]{1,6}", fullmatch=True))
_ts = st.datetimes(min_value=dt.datetime(2019, 1, 1), max_value=dt.datetime(2023, 1, 1),
                   timezones=st.just(dt.timezone.utc)).map(lambda t: t.replace(microsecond=0))


@st.composite
def records(draw):
    kind = draw(st.sampled_from(list(EventKind)))
    common = dict(timestamp=draw(_ts), caller=draw(_ids), cell_id=draw(st.from_regex(r"C[0-9]{0,3}", fullmatch=True)))
    if kind is EventKind.DATA:
        return CdrRecord(callee=None, event_kind=kind, bytes_up=draw(st.integers(0, 10**9)),
                         bytes_down=draw(st.integers(0, 10**9)), rat=draw(st.sampled_from(list(Rat))), **common)
    if kind is EventKind.CALL:
        dur = draw(st.one_of(st.integers(0, 10**5).map(float),
                             st.floats(0, 1e5, allow_nan=False).map(lambda x: round(x, 3))))
        return CdrRecord(callee=draw(_ids), event_kind=kind, duration_s=dur,
                         dropped=draw(st.booleans()), **common)
    return CdrRecord(callee=draw(_ids), event_kind=kind, **common)


@settings(max_examples=60, deadline=None)
@given(st.lists(records(), max_size=25))
def test_csv_round_trip(tmp_path_factory, recs):
    d = tmp_path_factory.mktemp("rt")
    p = d / "c.csv"
    write_cdr_file(p, recs)
    back = list(parse_cdr_file(p, strict=True))
    assert back == recs
    # the columnar path agrees with the streaming path, byte for byte
    frame = read_cdr_frame(p, strict=True)
    q = d / "c2.csv"
    write_cdr_frame(q, frame)
    assert q.read_bytes() == p.read_bytes()


@settings(max_examples=40, deadline=None)
@given(st.lists(records(), max_size=15))
def test_json_lines_round_trip(tmp_path_factory, recs):
    p = tmp_path_factory.mktemp("rt") / "c.jsonl"
    write_cdr_file(p, recs)
    assert list(parse_cdr_file(p, strict=True)) == recs
    for line in p.read_text().splitlines():
        assert set(json.loads(line)) == set(CDR_COLUMNS)


@settings(max_examples=40, deadline=None)
@given(st.lists(records(), max_size=15))
def test_canonical_rows_survive_frame(recs):
    frame = records_to_frame(recs)
    assert len(frame) == len(recs)
    for rec in recs:
        row = record_to_row(rec)
        assert row[0].endswith("Z")
        if rec.duration_s > 0:
            assert rec.event_kind is EventKind.CALL
        if rec.bytes_up + rec.bytes_down > 0:
            assert rec.event_kind is EventKind.DATA


def test_frame_reader_lenient_matches_stream(tmp_path):
    p = _write(tmp_path, "c.csv", [HEADER,
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,CALL,60,0,0,,1,C1",
                                   "2021-03-01T10:00:00Z,HOME:1,,DATA,0,5,6,G2,0,C1",
                                   "2021-03-01T10:00:00Z,HOME:1,HOME:2,SMS,3,0,0,,0,C1",
                                   "2021-03-01T11:00:00Z,BOGUS:1,HOME:2,SMS,0,0,0,,0,C1"])
    r1, r2 = ParseReport(), ParseReport()
    stream = list(parse_cdr_file(p, report=r1))
    frame = read_cdr_frame(p, report=r2)
    assert len(stream) == len(frame) == 2
    assert sorted(l for l, _ in r1.errors) == sorted(l for l, _ in r2.errors) == [4, 5]
    assert isinstance(frame, pd.DataFrame)
