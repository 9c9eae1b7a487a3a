"""Typed CDR, profile and label records plus their file readers and writers.

Two read paths exist for event files. :func:`parse_cdr_file` streams
:class:`CdrRecord` values and is the reference implementation of the row
rules. :func:`read_cdr_frame` applies the same rules column-wise with pandas
and is what the pipeline uses for multi-million row files.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

CDR_COLUMNS = [
    "timestamp", "caller", "callee", "event_kind", "duration_s",
    "bytes_up", "bytes_down", "rat", "dropped", "cell_id",
]
LABEL_COLUMNS = ["id", "label"]
PROFILE_FIXED_COLUMNS = ["id", "activation_date", "birth_year"]


class Operator(str, enum.Enum):
    HOME = "HOME"
    COMPETITOR = "COMPETITOR"
    LANDLINE = "LANDLINE"


class EventKind(str, enum.Enum):
    CALL = "CALL"
    SMS = "SMS"
    MMS = "MMS"
    DATA = "DATA"


class Rat(str, enum.Enum):
    G2 = "G2"
    G3 = "G3"
    G4 = "G4"


class Label(str, enum.Enum):
    CHURN = "CHURN"
    ACTIVE = "ACTIVE"


class IngestError(ValueError):
    """A row or file violates the documented record layout."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownEventKind(IngestError):
    pass


class InvalidField(IngestError):
    pass


class DuplicateIdentity(IngestError):
    pass


class SchemaMismatch(IngestError):
    pass


@dataclass(frozen=True, order=True)
class CustomerId:
    operator: Operator
    number: str

    def __post_init__(self):
        if not self.number:
            raise InvalidField("customer number must be non-empty")

    @classmethod
    def parse(cls, token: str) -> "CustomerId":
        op, sep, number = token.partition(":")
        if not sep:
            raise InvalidField(f"customer id {token!r} is not OPERATOR:number")
        try:
            operator = Operator(op)
        except ValueError:
            raise InvalidField(f"unknown operator {op!r}") from None
        return cls(operator, number)

    def __str__(self) -> str:
        return f"{self.operator.value}:{self.number}"


@dataclass(frozen=True)
class CdrRecord:
    timestamp: dt.datetime
    caller: CustomerId
    callee: CustomerId | None
    event_kind: EventKind
    duration_s: float = 0.0
    bytes_up: int = 0
    bytes_down: int = 0
    rat: Rat | None = None
    dropped: bool = False
    cell_id: str = ""

    def __post_init__(self):
        if self.timestamp.tzinfo is None or self.timestamp.utcoffset() != dt.timedelta(0):
            raise InvalidField("timestamp must be UTC")
        if self.duration_s < 0 or self.bytes_up < 0 or self.bytes_down < 0:
            raise InvalidField("negative duration or byte count")
        if self.duration_s > 0 and self.event_kind is not EventKind.CALL:
            raise InvalidField("only CALL events carry a duration")
        if self.bytes_up + self.bytes_down > 0 and self.event_kind is not EventKind.DATA:
            raise InvalidField("only DATA events carry byte counts")
        if self.rat is not None and self.event_kind is not EventKind.DATA:
            raise InvalidField("only DATA events carry a radio access type")
        if self.dropped and self.event_kind is not EventKind.CALL:
            raise InvalidField("only CALL events can be dropped")
        if (self.callee is None) != (self.event_kind is EventKind.DATA):
            raise InvalidField("DATA events have no callee; all other events need one")


@dataclass
class CustomerProfile:
    id: CustomerId
    activation_date: dt.date
    birth_year: int | None = None
    attributes: dict[str, float | str | None] = field(default_factory=dict)


@dataclass(frozen=True)
class LabelRecord:
    id: CustomerId
    label: Label


@dataclass
class ParseReport:
    """Rows skipped in lenient mode, as ``(line, message)`` pairs."""

    errors: list[tuple[int, str]] = field(default_factory=list)

    def add(self, err: IngestError) -> None:
        self.errors.append((err.line or 0, str(err)))

    def __len__(self) -> int:
        return len(self.errors)


# --- field codecs ---------------------------------------------------------

def parse_timestamp(token: str) -> dt.datetime:
    token = token.strip()
    if token.endswith("Z"):
        token = token[:-1] + "+00:00"
    try:
        ts = dt.datetime.fromisoformat(token)
    except ValueError:
        raise InvalidField(f"bad timestamp {token!r}") from None
    if ts.tzinfo is None or ts.utcoffset() != dt.timedelta(0):
        raise InvalidField(f"timestamp {token!r} is not UTC")
    return ts.astimezone(dt.timezone.utc)


def format_timestamp(ts: dt.datetime) -> str:
    fmt = "%Y-%m-%dT%H:%M:%S.%fZ" if ts.microsecond else "%Y-%m-%dT%H:%M:%SZ"
    return ts.astimezone(dt.timezone.utc).strftime(fmt)


def _number(token, name: str, integer: bool = False) -> float:
    if token is None or token == "":
        return 0
    try:
        value = float(token)
    except (TypeError, ValueError):
        raise InvalidField(f"{name} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise InvalidField(f"{name} must be finite")
    if value < 0:
        raise InvalidField(f"negative {name}: {token!r}")
    if integer:
        if value != int(value):
            raise InvalidField(f"{name} must be an integer")
        return int(value)
    return value


def _bool(token) -> bool:
    if isinstance(token, bool):
        return token
    if token in (None, "", "0", "false", "False", "FALSE"):
        return False
    if token in ("1", "true", "True", "TRUE"):
        return True
    raise InvalidField(f"bad boolean {token!r}")


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def record_from_fields(row: dict, line: int | None = None) -> CdrRecord:
    """Build a record from a dict of raw CSV/JSON field values."""
    try:
        kind_token = row.get("event_kind")
        try:
            kind = EventKind(kind_token)
        except ValueError:
            raise UnknownEventKind(f"unknown event_kind {kind_token!r}") from None
        callee_token = row.get("callee") or None
        rat_token = row.get("rat") or None
        try:
            rat = Rat(rat_token) if rat_token else None
        except ValueError:
            raise InvalidField(f"unknown rat {rat_token!r}") from None
        return CdrRecord(
            timestamp=parse_timestamp(str(row.get("timestamp", ""))),
            caller=CustomerId.parse(str(row.get("caller", ""))),
            callee=CustomerId.parse(callee_token) if callee_token else None,
            event_kind=kind,
            duration_s=_number(row.get("duration_s"), "duration_s"),
            bytes_up=_number(row.get("bytes_up"), "bytes_up", integer=True),
            bytes_down=_number(row.get("bytes_down"), "bytes_down", integer=True),
            rat=rat,
            dropped=_bool(row.get("dropped")),
            cell_id=str(row.get("cell_id") or ""),
        )
    except IngestError as err:
        if err.line is None and line is not None:
            raise type(err)(str(err), line) from None
        raise


def record_to_row(rec: CdrRecord) -> list[str]:
    """Canonical CSV field list for a record."""
    return [
        format_timestamp(rec.timestamp),
        str(rec.caller),
        str(rec.callee) if rec.callee is not None else "",
        rec.event_kind.value,
        _fmt_num(rec.duration_s),
        str(rec.bytes_up),
        str(rec.bytes_down),
        rec.rat.value if rec.rat is not None else "",
        "1" if rec.dropped else "0",
        rec.cell_id,
    ]


def record_to_json(rec: CdrRecord) -> dict:
    return {
        "timestamp": format_timestamp(rec.timestamp),
        "caller": str(rec.caller),
        "callee": str(rec.callee) if rec.callee is not None else None,
        "event_kind": rec.event_kind.value,
        "duration_s": rec.duration_s,
        "bytes_up": rec.bytes_up,
        "bytes_down": rec.bytes_down,
        "rat": rec.rat.value if rec.rat is not None else None,
        "dropped": rec.dropped,
        "cell_id": rec.cell_id,
    }


# --- streaming parsers ----------------------------------------------------

def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower().replace("-", "_")
        if fmt not in ("csv", "json_lines", "jsonl"):
            raise ValueError(f"unknown format {fmt!r}")
        return "csv" if fmt == "csv" else "json_lines"
    return "json_lines" if path.suffix in (".jsonl", ".ndjson") else "csv"


def _handle(err: IngestError, strict: bool, report: ParseReport | None) -> None:
    if strict:
        raise err
    log.warning("skipping row: %s", err)
    if report is not None:
        report.add(err)


def parse_cdr_file(path, format: str | None = None, strict: bool = False,
                   report: ParseReport | None = None) -> Iterator[CdrRecord]:
    """Yield records in file order.

    Malformed rows raise in strict mode; otherwise they are logged, appended
    to ``report`` and skipped.
    """
    path = Path(path)
    fmt = _detect_format(path, format)
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return
            if header != CDR_COLUMNS:
                raise SchemaMismatch(f"CDR header must be {','.join(CDR_COLUMNS)}", 1)
            for lineno, fields in enumerate(reader, start=2):
                if not fields:
                    continue
                try:
                    if len(fields) != len(CDR_COLUMNS):
                        raise InvalidField(f"expected {len(CDR_COLUMNS)} fields, got {len(fields)}", lineno)
                    yield record_from_fields(dict(zip(CDR_COLUMNS, fields)), lineno)
                except IngestError as err:
                    _handle(err, strict, report)
        else:
            for lineno, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    try:
                        obj = json.loads(text)
                    except json.JSONDecodeError as exc:
                        raise InvalidField(f"bad JSON: {exc.msg}", lineno) from None
                    if not isinstance(obj, dict) or set(obj) - set(CDR_COLUMNS):
                        raise SchemaMismatch("unexpected keys in JSON record", lineno)
                    yield record_from_fields(obj, lineno)
                except IngestError as err:
                    _handle(err, strict, report)


def write_cdr_file(path, records: Iterable[CdrRecord], format: str | None = None) -> None:
    path = Path(path)
    fmt = _detect_format(path, format)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CDR_COLUMNS)
            for rec in records:
                writer.writerow(record_to_row(rec))
        else:
            for rec in records:
                fh.write(json.dumps(record_to_json(rec)) + "\n")


def _read_table(path: Path, required: list[str]) -> Iterator[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if header[: len(required)] != required:
            raise SchemaMismatch(f"header must start with {','.join(required)}", 1)
        if len(set(header)) != len(header):
            raise SchemaMismatch("duplicate column names", 1)
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                yield lineno, InvalidField(f"expected {len(header)} fields, got {len(fields)}", lineno)
                continue
            yield lineno, dict(zip(header, fields))


def _parse_date(token: str) -> dt.date:
    try:
        return dt.date.fromisoformat(token.strip())
    except ValueError:
        raise InvalidField(f"bad date {token!r}") from None


def parse_profiles(path, strict: bool = False, report: ParseReport | None = None) -> list[CustomerProfile]:
    """Read the profile CSV. Attribute columns whose present values all parse
    as numbers become floats; every other attribute column stays textual.
    Empty cells are missing (``None``)."""
    path = Path(path)
    raw: list[tuple[int, dict]] = []
    for lineno, row in _read_table(path, PROFILE_FIXED_COLUMNS):
        if isinstance(row, IngestError):
            _handle(row, strict, report)
            continue
        raw.append((lineno, row))
    attr_names: list[str] = []
    if raw:
        attr_names = [c for c in raw[0][1] if c not in PROFILE_FIXED_COLUMNS]
    numeric = {}
    for name in attr_names:
        ok = True
        for _, row in raw:
            tok = row[name]
            if tok == "":
                continue
            try:
                float(tok)
            except ValueError:
                ok = False
                break
        numeric[name] = ok

    out: list[CustomerProfile] = []
    seen: set[CustomerId] = set()
    for lineno, row in raw:
        try:
            cid = CustomerId.parse(row["id"])
            if cid in seen:
                raise DuplicateIdentity(f"duplicate profile id {row['id']}", lineno)
            by = row["birth_year"].strip()
            try:
                birth_year = int(by) if by else None
            except ValueError:
                raise InvalidField(f"bad birth_year {by!r}") from None
            attrs: dict[str, float | str | None] = {}
            for name in attr_names:
                tok = row[name]
                if tok == "":
                    attrs[name] = None
                else:
                    attrs[name] = float(tok) if numeric[name] else tok
            prof = CustomerProfile(cid, _parse_date(row["activation_date"]), birth_year, attrs)
        except DuplicateIdentity:
            raise
        except IngestError as err:
            if err.line is None:
                err = type(err)(str(err), lineno)
            _handle(err, strict, report)
            continue
        seen.add(cid)
        out.append(prof)
    return out


def parse_labels(path, strict: bool = False, report: ParseReport | None = None) -> list[LabelRecord]:
    path = Path(path)
    out: list[LabelRecord] = []
    seen: set[CustomerId] = set()
    for lineno, row in _read_table(path, LABEL_COLUMNS):
        if isinstance(row, IngestError):
            _handle(row, strict, report)
            continue
        try:
            cid = CustomerId.parse(row["id"])
            if cid in seen:
                raise DuplicateIdentity(f"duplicate label id {row['id']}", lineno)
            if cid.operator is not Operator.HOME:
                raise InvalidField(f"labeled id {row['id']} is not a HOME customer")
            try:
                label = Label(row["label"])
            except ValueError:
                raise InvalidField(f"unknown label {row['label']!r}") from None
        except DuplicateIdentity:
            raise
        except IngestError as err:
            if err.line is None:
                err = type(err)(str(err), lineno)
            _handle(err, strict, report)
            continue
        seen.add(cid)
        out.append(LabelRecord(cid, label))
    return out


def write_profiles(path, profiles: list[CustomerProfile]) -> None:
    attr_names: list[str] = []
    for p in profiles:
        for name in p.attributes:
            if name not in attr_names:
                attr_names.append(name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROFILE_FIXED_COLUMNS + attr_names)
        for p in profiles:
            row = [str(p.id), p.activation_date.isoformat(),
                   "" if p.birth_year is None else str(p.birth_year)]
            for name in attr_names:
                v = p.attributes.get(name)
                row.append("" if v is None else (_fmt_num(v) if isinstance(v, float) else str(v)))
            writer.writerow(row)


def write_labels(path, labels: list[LabelRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_COLUMNS)
        for rec in labels:
            writer.writerow([str(rec.id), rec.label.value])


# --- columnar path --------------------------------------------------------

FRAME_COLUMNS = CDR_COLUMNS + ["caller_op", "callee_op"]


def empty_cdr_frame() -> pd.DataFrame:
    return pd.DataFrame({
        "timestamp": pd.Series([], dtype="datetime64[ns, UTC]"),
        "caller": pd.Series([], dtype=object),
        "callee": pd.Series([], dtype=object),
        "event_kind": pd.Series([], dtype=object),
        "duration_s": pd.Series([], dtype=float),
        "bytes_up": pd.Series([], dtype=np.int64),
        "bytes_down": pd.Series([], dtype=np.int64),
        "rat": pd.Series([], dtype=object),
        "dropped": pd.Series([], dtype=bool),
        "cell_id": pd.Series([], dtype=object),
        "caller_op": pd.Series([], dtype=object),
        "callee_op": pd.Series([], dtype=object),
    })


def records_to_frame(records: Iterable[CdrRecord]) -> pd.DataFrame:
    """Materialize a record stream as the columnar event table."""
    rows = [
        (r.timestamp, str(r.caller), str(r.callee) if r.callee is not None else "",
         r.event_kind.value, float(r.duration_s), int(r.bytes_up), int(r.bytes_down),
         r.rat.value if r.rat is not None else "", bool(r.dropped), r.cell_id)
        for r in records
    ]
    if not rows:
        return empty_cdr_frame()
    df = pd.DataFrame(rows, columns=CDR_COLUMNS)
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    return _add_operator_columns(df)


def _operator_of(ids: pd.Series) -> np.ndarray:
    codes, uniques = pd.factorize(ids, sort=False)
    ops = np.array([u.partition(":")[0] for u in uniques], dtype=object)
    return ops[codes] if len(uniques) else np.array([], dtype=object)


def _valid_ids(ids: pd.Series) -> np.ndarray:
    codes, uniques = pd.factorize(ids, sort=False)
    ok = np.array([u.partition(":")[0] in _OPERATORS and len(u.partition(":")[2]) > 0
                   for u in uniques], dtype=bool)
    return ok[codes] if len(uniques) else np.array([], dtype=bool)


_OPERATORS = {op.value for op in Operator}


def _parse_timestamp_column(col: pd.Series) -> pd.Series:
    """Vectorized ISO-8601 UTC parse; unparseable cells become NaT."""
    values = col.to_numpy().astype("U")
    fast = (np.char.str_len(values) == 20) & np.char.endswith(values, "Z")
    out = np.full(len(values), np.datetime64("NaT"), dtype="datetime64[ns]")
    if fast.all():
        try:
            out[:] = np.char.rstrip(values, "Z").astype("datetime64[s]")
            return pd.Series(pd.to_datetime(out, utc=True), index=col.index)
        except ValueError:
            pass
    # slow path: at least one cell is not in the canonical form
    for i, tok in enumerate(values):
        try:
            out[i] = np.datetime64(parse_timestamp(tok).replace(tzinfo=None), "ns")
        except IngestError:
            pass
    return pd.Series(pd.to_datetime(out, utc=True), index=col.index)


def _add_operator_columns(df: pd.DataFrame) -> pd.DataFrame:
    df["caller_op"] = _operator_of(df["caller"])
    df["callee_op"] = _operator_of(df["callee"])
    return df


def read_cdr_frame(path, strict: bool = False, report: ParseReport | None = None) -> pd.DataFrame:
    """Read a CDR CSV (or JSON-lines) file into the columnar event table.

    Applies the same validity rules as :func:`parse_cdr_file`, vectorized.
    ``callee`` and ``rat`` use the empty string for "absent".
    """
    path = Path(path)
    if _detect_format(path, None) == "json_lines":
        return records_to_frame(parse_cdr_file(path, "json_lines", strict, report))
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
    if not header:
        return empty_cdr_frame()
    if header.split(",") != CDR_COLUMNS:
        raise SchemaMismatch(f"CDR header must be {','.join(CDR_COLUMNS)}", 1)
    numeric_cols = ("duration_s", "bytes_up", "bytes_down")
    try:
        # typed read; any non-numeric cell forces the all-text path below
        raw = pd.read_csv(path, dtype={c: (float if c in numeric_cols else str) for c in CDR_COLUMNS},
                          keep_default_na=False, na_values={c: [""] for c in numeric_cols},
                          float_precision="round_trip")
    except ValueError:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    if raw.empty:
        return empty_cdr_frame()
    n = len(raw)
    bad = pd.Series("", index=raw.index, dtype=object)

    def flag(mask, message):
        mask = np.asarray(mask, dtype=bool) & (bad.values == "")
        if mask.any():
            bad.values[mask] = message

    kinds = raw["event_kind"]
    flag(~kinds.isin([k.value for k in EventKind]), "unknown event_kind")
    ts = _parse_timestamp_column(raw["timestamp"])
    flag(ts.isna(), "bad timestamp")

    nums = {}
    for col in ("duration_s", "bytes_up", "bytes_down"):
        if raw[col].dtype == float:
            val = raw[col].fillna(0.0)
        else:
            val = pd.to_numeric(raw[col].replace("", "0"), errors="coerce")
            flag(val.isna(), f"{col} is not a number")
            val = val.fillna(0.0)
        flag(~np.isfinite(val), f"{col} must be finite")
        flag(val < 0, f"negative {col}")
        if col != "duration_s":
            flag(val != np.floor(val), f"{col} must be an integer")
        nums[col] = val
    callee = raw["callee"]
    flag((nums["duration_s"] > 0) & (kinds != "CALL"), "only CALL events carry a duration")
    flag((nums["bytes_up"] + nums["bytes_down"] > 0) & (kinds != "DATA"), "only DATA events carry byte counts")
    flag(~raw["rat"].isin(["", "G2", "G3", "G4"]), "unknown rat")
    flag((raw["rat"] != "") & (kinds != "DATA"), "only DATA events carry a radio access type")
    dropped_tok = raw["dropped"]
    flag(~dropped_tok.isin(["", "0", "1", "true", "false", "True", "False"]), "bad boolean")
    dropped = dropped_tok.isin(["1", "true", "True"])
    flag(dropped & (kinds != "CALL"), "only CALL events can be dropped")
    flag((callee == "") != (kinds == "DATA"), "DATA events have no callee; all other events need one")
    flag(~_valid_ids(raw["caller"]), "bad caller id")
    flag((callee != "") & ~_valid_ids(callee), "bad callee id")

    bad_mask = bad.values != ""
    if bad_mask.any():
        first = int(np.flatnonzero(bad_mask)[0])
        if strict:
            cls = UnknownEventKind if bad.values[first] == "unknown event_kind" else InvalidField
            raise cls(bad.values[first], first + 2)
        for i in np.flatnonzero(bad_mask):
            err = InvalidField(bad.values[i], int(i) + 2)
            log.warning("skipping row: %s", err)
            if report is not None:
                report.add(err)
    keep = ~bad_mask
    df = pd.DataFrame({
        "timestamp": ts[keep].astype("datetime64[ns, UTC]"),
        "caller": raw["caller"][keep],
        "callee": callee[keep],
        "event_kind": kinds[keep],
        "duration_s": nums["duration_s"][keep].astype(float),
        "bytes_up": nums["bytes_up"][keep].astype(np.int64),
        "bytes_down": nums["bytes_down"][keep].astype(np.int64),
        "rat": raw["rat"][keep],
        "dropped": dropped[keep].astype(bool),
        "cell_id": raw["cell_id"][keep],
    }).reset_index(drop=True)
    assert len(df) == n - int(bad_mask.sum())
    return _add_operator_columns(df)


def write_cdr_frame(path, df: pd.DataFrame) -> None:
    """Write the columnar table in canonical CSV form (same bytes as
    :func:`write_cdr_file` would produce for the equivalent records)."""
    ts = df["timestamp"]
    naive = ts.dt.tz_convert("UTC").dt.tz_localize(None).to_numpy()
    whole = naive.astype("datetime64[s]")
    has_frac = whole != naive
    text = np.char.add(np.datetime_as_string(whole, unit="s"), "Z").astype(object)
    if has_frac.any():
        text[has_frac] = np.char.add(np.datetime_as_string(naive[has_frac], unit="us"), "Z")
    dur = df["duration_s"].astype(float)
    integral = (dur == np.floor(dur)).to_numpy()
    dur_text = dur.astype(np.int64).astype(str).to_numpy().astype(object)
    if not integral.all():
        dur_text[~integral] = dur[~integral].map(repr).to_numpy()
    out = pd.DataFrame({
        "timestamp": text,
        "caller": df["caller"],
        "callee": df["callee"],
        "event_kind": df["event_kind"],
        "duration_s": dur_text,
        "bytes_up": df["bytes_up"].astype(np.int64),
        "bytes_down": df["bytes_down"].astype(np.int64),
        "rat": df["rat"],
        "dropped": df["dropped"].astype(int),
        "cell_id": df["cell_id"],
    })
    buf = io.StringIO()
    out.to_csv(buf, index=False, lineterminator="\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def profiles_frame(profiles: list[CustomerProfile]) -> pd.DataFrame:
    """Profiles as a frame indexed by canonical id string."""
    rows = []
    for p in profiles:
        row = {"id": str(p.id), "activation_date": pd.Timestamp(p.activation_date),
               "birth_year": p.birth_year}
        row.update(p.attributes)
        rows.append(row)
    if not rows:
        return pd.DataFrame(columns=["activation_date", "birth_year"], index=pd.Index([], name="id"))
    df = pd.DataFrame(rows).set_index("id")
    df["birth_year"] = pd.to_numeric(df["birth_year"], errors="coerce")
    return df


def labels_series(labels: list[LabelRecord]) -> pd.Series:
    return pd.Series({str(r.id): r.label.value for r in labels}, dtype=object, name="label")
