"""Per-customer statistical features, the SNA merge, and dataset assembly."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from ._util import atomic_write_text, month_bounds, utc_timestamp
from .cdr_ingest import CustomerProfile, LabelRecord, profiles_frame
from .social_graph import SNA_FEATURES, SnaFeatureRow, isolated_defaults, rows_to_frame

log = logging.getLogger(__name__)

NUMERIC = "NUMERIC"
CATEGORICAL = "CATEGORICAL"

CALL_STATS = ("count", "dur_sum", "dur_mean", "dur_max", "dur_min", "contacts")
MSG_STATS = ("count", "contacts")
DATA_STATS = ("count", "up_sum", "up_mean", "up_max", "up_min",
              "down_sum", "down_mean", "down_max", "down_min")
FAMILIES = ("call_out", "call_in", "sms_out", "sms_in", "mms_out", "mms_in", "data")


class SchemaCollision(ValueError):
    pass


class MissingLabel(ValueError):
    pass


@dataclass
class FeatureMatrix:
    """Feature rows indexed by customer id.

    Numeric columns are float64 with NaN for missing cells; categorical
    columns hold strings with None for missing cells.
    """

    data: pd.DataFrame
    kinds: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for col in self.data.columns:
            self.kinds.setdefault(col, NUMERIC)
        self.kinds = {c: self.kinds[c] for c in self.data.columns}
        if self.data.index.has_duplicates:
            raise ValueError("feature matrix ids must be unique")

    @property
    def ids(self) -> pd.Index:
        return self.data.index

    @property
    def schema(self) -> list[tuple[str, str]]:
        return list(self.kinds.items())

    @property
    def names(self) -> list[str]:
        return list(self.data.columns)

    def categorical(self) -> list[str]:
        return [c for c, k in self.kinds.items() if k == CATEGORICAL]

    def numeric(self) -> list[str]:
        return [c for c, k in self.kinds.items() if k == NUMERIC]

    def categories(self, name: str) -> list[str]:
        col = self.data[name]
        return sorted(str(v) for v in col.dropna().unique())

    def schema_record(self) -> list[dict]:
        out = []
        for name, kind in self.kinds.items():
            rec = {"name": name, "kind": kind}
            if kind == CATEGORICAL:
                rec["categories"] = self.categories(name)
            out.append(rec)
        return out

    def n_missing(self) -> int:
        return int(self.data.isna().sum().sum())

    def select(self, columns: Iterable[str] | None = None, rows=None) -> "FeatureMatrix":
        cols = list(self.data.columns) if columns is None else list(columns)
        data = self.data[cols] if rows is None else self.data.loc[rows, cols]
        return FeatureMatrix(data.copy(), {c: self.kinds[c] for c in cols})

    def equals(self, other: "FeatureMatrix") -> bool:
        return self.kinds == other.kinds and self.data.equals(other.data)


@dataclass
class LabeledDataset:
    matrix: FeatureMatrix
    labels: pd.Series  # id -> "CHURN" / "ACTIVE", aligned with matrix rows
    baseline: pd.Timestamp | None = None

    def __post_init__(self):
        self.labels = self.labels.reindex(self.matrix.ids)
        if self.labels.isna().any():
            raise MissingLabel("every row needs a label")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def y(self) -> np.ndarray:
        return (self.labels.to_numpy() == "CHURN").astype(np.int8)

    def subset(self, ids) -> "LabeledDataset":
        ids = pd.Index(ids)
        return LabeledDataset(FeatureMatrix(self.matrix.data.loc[ids], dict(self.matrix.kinds)),
                              self.labels.loc[ids], self.baseline)

    def class_counts(self) -> dict[str, int]:
        return {k: int(v) for k, v in self.labels.value_counts().items()}


# --- statistical features -------------------------------------------------

def _window_events(df: pd.DataFrame, baseline: pd.Timestamp, months: int):
    bounds = month_bounds(baseline, months)
    secs = df["timestamp"].astype("int64").to_numpy() // 10**9
    keep = (secs >= bounds[-1]) & (secs < bounds[0])
    sub = df[keep]
    secs = secs[keep]
    asc = bounds[::-1]
    month = months - np.searchsorted(asc, secs, side="right") + 1
    return sub, secs, month, bounds


def statistical_features(records: pd.DataFrame, profiles: list[CustomerProfile] | pd.DataFrame,
                         baseline, window_months: int = 6,
                         categorical_columns: Iterable[str] = ()) -> FeatureMatrix:
    """Aggregate each HOME customer's events over the trailing window.

    Per event family (CALL/SMS/MMS in and out, DATA) and per month plus the
    whole window: counts, duration or byte statistics and distinct contacts.
    The final month additionally gets weekly counts and active-day counts.
    Customers without events get zero aggregates.
    """
    if window_months < 1:
        raise ValueError("window_months must be >= 1")
    base = utc_timestamp(baseline)
    prof = profiles if isinstance(profiles, pd.DataFrame) else profiles_frame(profiles)
    cats = set(categorical_columns)

    sub, secs, month, bounds = _window_events(records, base, window_months)
    if len(records) and not len(sub):
        earliest = records["timestamp"].min()
        if base <= earliest:
            log.warning("baseline %s precedes the earliest record %s; emitting zero aggregates",
                        base, earliest)

    kind = sub["event_kind"].to_numpy(dtype=object)
    caller = sub["caller"].to_numpy(dtype=object)
    callee = sub["callee"].to_numpy(dtype=object)
    caller_home = sub["caller_op"].to_numpy(dtype=object) == "HOME"
    callee_home = sub["callee_op"].to_numpy(dtype=object) == "HOME"
    is_data = kind == "DATA"

    ids = pd.Index(sorted(set(prof.index) | set(caller[caller_home]) | set(callee[callee_home & ~is_data])),
                   name="id")
    n = len(ids)

    out_m = caller_home & ~is_data
    in_m = callee_home & ~is_data
    data_m = caller_home & is_data
    fam = np.concatenate([
        np.char.add(np.char.lower(kind[out_m].astype(str)), "_out"),
        np.char.add(np.char.lower(kind[in_m].astype(str)), "_in"),
        np.full(int(data_m.sum()), "data"),
    ]) if len(sub) else np.array([], dtype=str)
    inv = pd.DataFrame({
        "cust": ids.get_indexer(np.concatenate([caller[out_m], callee[in_m], caller[data_m]])),
        "family": fam,
        "month": np.concatenate([month[out_m], month[in_m], month[data_m]]),
        "secs": np.concatenate([secs[out_m], secs[in_m], secs[data_m]]),
        "contact": np.concatenate([callee[out_m], caller[in_m], np.full(int(data_m.sum()), "")]),
        "other_op": np.concatenate([sub["callee_op"].to_numpy(dtype=object)[out_m],
                                    sub["caller_op"].to_numpy(dtype=object)[in_m],
                                    np.full(int(data_m.sum()), "")]),
        "dur": np.concatenate([sub["duration_s"].to_numpy()[out_m], sub["duration_s"].to_numpy()[in_m],
                               np.zeros(int(data_m.sum()))]),
        "up": np.concatenate([np.zeros(int(out_m.sum() + in_m.sum())), sub["bytes_up"].to_numpy()[data_m]]),
        "down": np.concatenate([np.zeros(int(out_m.sum() + in_m.sum())), sub["bytes_down"].to_numpy()[data_m]]),
        "dropped": np.concatenate([sub["dropped"].to_numpy()[out_m], sub["dropped"].to_numpy()[in_m],
                                   np.zeros(int(data_m.sum()), bool)]),
        "rat": np.concatenate([np.full(int(out_m.sum() + in_m.sum()), ""),
                               sub["rat"].to_numpy(dtype=object)[data_m]]),
        "cell": np.concatenate([sub["cell_id"].to_numpy(dtype=object)[out_m],
                                np.full(int(in_m.sum()), ""),
                                sub["cell_id"].to_numpy(dtype=object)[data_m]]),
    })
    inv["contact"] = pd.factorize(inv["contact"])[0]

    columns: dict[str, np.ndarray] = {}
    periods = [(f"m{k}", inv["month"].to_numpy() == k) for k in range(1, window_months + 1)]
    periods.append(("all", np.ones(len(inv), dtype=bool)))
    for family in FAMILIES:
        fmask = inv["family"].to_numpy() == family
        stats = CALL_STATS if family.startswith("call") else DATA_STATS if family == "data" else MSG_STATS
        for pname, pmask in periods:
            g = inv[fmask & pmask]
            agg = _aggregate(g, stats, n)
            for stat in stats:
                columns[f"{family}_{stat}_{pname}"] = agg[stat]

    # final-month weekly counts and active days
    final = inv[inv["month"].to_numpy() == 1]
    age_days = (bounds[0] - final["secs"].to_numpy()) // 86400
    week = age_days // 7
    for family in FAMILIES:
        fmask = final["family"].to_numpy() == family
        for w in range(4):
            sel = fmask & (week == w)
            columns[f"{family}_count_wk{w + 1}"] = np.bincount(final["cust"].to_numpy()[sel], minlength=n).astype(float)
        day_keys = pd.DataFrame({"cust": final["cust"].to_numpy()[fmask], "day": age_days[fmask]})
        days = day_keys.drop_duplicates()
        columns[f"{family}_active_days_m1"] = np.bincount(days["cust"].to_numpy(), minlength=n).astype(float)

    cust = inv["cust"].to_numpy()
    fam_arr = inv["family"].to_numpy()
    interact = fam_arr != "data"
    outgoing = np.isin(fam_arr, ("call_out", "sms_out", "mms_out"))

    cells = inv.loc[inv["cell"].to_numpy() != "", ["cust", "cell"]].drop_duplicates()
    columns["distinct_cells"] = np.bincount(cells["cust"].to_numpy(), minlength=n).astype(float)

    window_days = (bounds[0] - bounds[-1]) / 86400.0
    last_out = np.full(n, -np.inf)
    np.maximum.at(last_out, cust[outgoing], inv["secs"].to_numpy()[outgoing].astype(float))
    columns["days_since_last_outgoing"] = np.where(
        np.isfinite(last_out), np.floor((bounds[0] - last_out) / 86400.0), np.floor(window_days))

    rat = inv["rat"].to_numpy()
    data_rows = fam_arr == "data"
    sessions = np.bincount(cust[data_rows], minlength=n).astype(float)
    fast = np.bincount(cust[data_rows & np.isin(rat, ("G3", "G4"))], minlength=n).astype(float)
    columns["avg_radio_access_type"] = np.divide(fast, sessions, out=np.full(n, np.nan), where=sessions > 0)

    n_interact = np.bincount(cust[interact], minlength=n).astype(float)
    other = inv["other_op"].to_numpy()
    for op, name in (("COMPETITOR", "pct_competitor_transactions"), ("LANDLINE", "pct_landline_transactions")):
        hits = np.bincount(cust[interact & (other == op)], minlength=n).astype(float)
        columns[name] = np.divide(hits, n_interact, out=np.zeros(n), where=n_interact > 0)

    dropped = inv["dropped"].to_numpy().astype(bool)
    columns["dropped_call_count"] = np.bincount(cust[dropped], minlength=n).astype(float)
    calls = columns["call_out_count_all"]
    sms = columns["sms_out_count_all"]
    columns["call_sms_ratio"] = calls / np.maximum(sms, 1.0)

    data = pd.DataFrame(columns, index=ids)
    kinds = {c: NUMERIC for c in data.columns}

    prof = prof.reindex(ids)
    birth = pd.to_numeric(prof.get("birth_year", pd.Series(np.nan, index=ids)), errors="coerce")
    data["customer_age"] = float(base.year) - birth.to_numpy(dtype=float)
    kinds["customer_age"] = NUMERIC
    if "activation_date" in prof:
        act = pd.to_datetime(prof["activation_date"])
        data["tenure_days"] = ((base.tz_localize(None) - act).dt.days).to_numpy(dtype=float)
        kinds["tenure_days"] = NUMERIC
    for col in prof.columns:
        if col in ("activation_date", "birth_year"):
            continue
        if col in data.columns:
            raise SchemaCollision(f"profile attribute {col!r} collides with a computed feature")
        values = prof[col]
        textual = values.dropna().map(lambda v: isinstance(v, str)).any()
        if col in cats or textual:
            data[col] = values.map(lambda v: None if _is_missing(v) else _cat_str(v)).astype(object)
            kinds[col] = CATEGORICAL
        else:
            data[col] = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
            kinds[col] = NUMERIC
    return FeatureMatrix(data, kinds)


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and np.isnan(v))


def _cat_str(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _aggregate(g: pd.DataFrame, stats: tuple[str, ...], n: int) -> dict[str, np.ndarray]:
    cust = g["cust"].to_numpy()
    out: dict[str, np.ndarray] = {}
    count = np.bincount(cust, minlength=n).astype(float)
    out["count"] = count
    for src, prefix in (("dur", "dur"), ("up", "up"), ("down", "down")):
        if f"{prefix}_sum" not in stats:
            continue
        v = g[src].to_numpy(dtype=float)
        s = np.bincount(cust, weights=v, minlength=n)
        mx = np.full(n, -np.inf)
        mn = np.full(n, np.inf)
        np.maximum.at(mx, cust, v)
        np.minimum.at(mn, cust, v)
        has = count > 0
        out[f"{prefix}_sum"] = s
        out[f"{prefix}_mean"] = np.divide(s, count, out=np.zeros(n), where=has)
        out[f"{prefix}_max"] = np.where(has, mx, 0.0)
        out[f"{prefix}_min"] = np.where(has, mn, 0.0)
    if "contacts" in stats:
        pairs = g[["cust", "contact"]].drop_duplicates()
        out["contacts"] = np.bincount(pairs["cust"].to_numpy(), minlength=n).astype(float)
    return out


# --- merge / assemble -----------------------------------------------------

def sna_matrix(sna, ids: Iterable[str] | None = None, damping: float = 0.85) -> FeatureMatrix:
    """SNA features for ``ids`` (default: every row of ``sna``); ids missing
    from the graph get isolated-node values."""
    frame = rows_to_frame(sna) if isinstance(sna, list) else sna
    frame = frame[SNA_FEATURES].astype(float)
    if ids is not None:
        idx = pd.Index(ids, name="id")
        frame = frame.reindex(idx)
        defaults = isolated_defaults(damping)
        for col in SNA_FEATURES:
            frame[col] = frame[col].fillna(defaults[col])
    frame.index.name = "id"
    return FeatureMatrix(frame, {c: NUMERIC for c in SNA_FEATURES})


def merge(statistical: FeatureMatrix, sna: list[SnaFeatureRow] | pd.DataFrame | FeatureMatrix,
          profiles=None, damping: float = 0.85) -> FeatureMatrix:
    """Outer join of statistical and SNA features on customer id.

    Customers without a graph presence get isolated-node SNA values; customers
    present only in the graph get missing statistical cells. ``profiles``
    adds ids that appear in neither input.
    """
    sna_fm = sna if isinstance(sna, FeatureMatrix) else sna_matrix(sna, damping=damping)
    clash = set(statistical.names) & set(sna_fm.names)
    if clash:
        raise SchemaCollision(f"duplicate feature names: {sorted(clash)}")
    ids = statistical.ids.union(sna_fm.ids)
    if profiles is not None:
        prof_ids = profiles.index if isinstance(profiles, pd.DataFrame) else [str(p.id) for p in profiles]
        ids = ids.union(pd.Index(prof_ids))
    ids = pd.Index(sorted(ids), name="id")
    left = statistical.data.reindex(ids)
    defaults = isolated_defaults(damping)
    right = sna_fm.data.reindex(ids)
    for col in right.columns:
        if col in defaults:
            right[col] = right[col].fillna(defaults[col])
    data = pd.concat([left, right], axis=1)
    kinds = dict(statistical.kinds)
    kinds.update(sna_fm.kinds)
    return FeatureMatrix(data, kinds)


def assemble(m: FeatureMatrix, labels: list[LabelRecord] | pd.Series | Mapping[str, str], baseline,
             exclusion_months: int = 4, profiles=None) -> LabeledDataset:
    """Drop customers activated inside the exclusion window and attach labels."""
    base = utc_timestamp(baseline)
    lab = _labels_series(labels)
    keep = m.ids
    if profiles is not None and exclusion_months > 0:
        prof = profiles if isinstance(profiles, pd.DataFrame) else profiles_frame(profiles)
        cutoff = (base - pd.DateOffset(months=exclusion_months)).tz_localize(None)
        act = pd.to_datetime(prof["activation_date"]).reindex(keep)
        recent = (act >= cutoff).to_numpy()
        keep = keep[~recent]
    missing = keep.difference(lab.index)
    if len(missing):
        raise MissingLabel(f"{len(missing)} retained ids have no label, e.g. {missing[0]}")
    data = m.data.loc[keep]
    return LabeledDataset(FeatureMatrix(data, dict(m.kinds)), lab.loc[keep], base)


def _labels_series(labels) -> pd.Series:
    if isinstance(labels, pd.Series):
        return labels.astype(object)
    if isinstance(labels, Mapping):
        return pd.Series(dict(labels), dtype=object)
    return pd.Series({str(r.id): r.label.value for r in labels}, dtype=object)


# --- persistence ----------------------------------------------------------

LABEL_COLUMN = "label"


def write_matrix(csv_path, schema_path, m: FeatureMatrix, labels: pd.Series | None = None,
                 extra: dict | None = None) -> None:
    """CSV (``id``, features, optional ``label``) plus a JSON schema sidecar."""
    df = m.data.copy()
    if labels is not None:
        df[LABEL_COLUMN] = labels.reindex(df.index).to_numpy()
    text = df.reset_index().to_csv(index=False, lineterminator="\n", float_format="%.17g")
    atomic_write_text(csv_path, text)
    schema = {"columns": m.schema_record(), "label_column": LABEL_COLUMN if labels is not None else None}
    if extra:
        schema.update(extra)
    atomic_write_text(schema_path, json.dumps(schema, indent=2, sort_keys=True) + "\n")


def read_matrix(csv_path, schema_path) -> tuple[FeatureMatrix, pd.Series | None, dict]:
    schema = json.loads(Path(schema_path).read_text())
    kinds = {c["name"]: c["kind"] for c in schema["columns"]}
    dtypes = {name: (str if kind == CATEGORICAL else float) for name, kind in kinds.items()}
    dtypes["id"] = str
    label_col = schema.get("label_column")
    if label_col:
        dtypes[label_col] = str
    df = pd.read_csv(csv_path, dtype=dtypes, keep_default_na=False, float_precision="round_trip",
                     na_values={n: [""] for n in kinds})
    df = df.set_index("id")
    labels = df.pop(label_col) if label_col else None
    for name, kind in kinds.items():
        if kind == CATEGORICAL:
            df[name] = df[name].astype(object).where(df[name].notna(), None)
    expected = list(kinds)
    if list(df.columns) != expected:
        raise ValueError("matrix CSV columns do not match the schema sidecar")
    return FeatureMatrix(df, kinds), labels, schema
