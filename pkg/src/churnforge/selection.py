"""Feature transformation and selection policy.

The nine rules run in a fixed order. Dropping rows (rule 4) or imputing can
turn a column constant or make two columns identical, so the whole sequence
is repeated until a pass changes nothing; the result is a fixed point and a
second application is a no-op.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .features import CATEGORICAL, NUMERIC, FeatureMatrix

OTHER = "Other"

RULES = (
    "identifier_column",
    "constant_column",
    "duplicate_column",
    "sparse_row",
    "sparse_column",
    "categorical_missing_to_other",
    "numeric_missing_to_mean",
    "category_cap",
    "correlated_column",
)


@dataclass
class SelectionPolicy:
    identifier_columns: tuple[str, ...] = ("contract_id", "msisdn")
    max_row_missing: float = 0.90
    max_column_missing: float = 0.70
    max_categories: int = 31
    correlation_threshold: float | None = 0.95
    max_passes: int = 10

    def to_dict(self) -> dict:
        d = asdict(self)
        d["identifier_columns"] = list(self.identifier_columns)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionPolicy":
        d = dict(d)
        if "identifier_columns" in d:
            d["identifier_columns"] = tuple(d["identifier_columns"])
        return cls(**d)


@dataclass
class SelectionEvent:
    pass_index: int
    step: int
    rule: str
    target: str  # "column" / "row" / "cell"
    names: list[str]
    detail: dict = field(default_factory=dict)


@dataclass
class SelectionReport:
    events: list[SelectionEvent] = field(default_factory=list)
    passes: int = 0

    def log(self, pass_index, step, target, names, **detail):
        self.events.append(SelectionEvent(pass_index, step, RULES[step - 1], target, list(names), detail))

    def dropped_columns(self, rule: str | None = None) -> list[str]:
        return [n for e in self.events if e.target == "column" and (rule is None or e.rule == rule)
                for n in e.names]

    def dropped_rows(self) -> list[str]:
        return [n for e in self.events if e.target == "row" for n in e.names]

    def rule_sequence(self, pass_index: int = 0) -> list[str]:
        return [e.rule for e in self.events if e.pass_index == pass_index]

    def to_dict(self) -> dict:
        return {"passes": self.passes, "events": [asdict(e) for e in self.events]}


def _missing(df: pd.DataFrame) -> pd.DataFrame:
    return df.isna()


def _is_constant(col: pd.Series, kind: str) -> bool:
    present = col.dropna()
    if present.empty:
        # all-missing columns are the sparse-column rule's business
        return False
    if present.nunique() > 1:
        return False
    # a categorical column with gaps gains an "Other" level and stays informative
    return kind == NUMERIC or len(present) == len(col)


def _column_key(col: pd.Series) -> tuple:
    values = col.to_numpy(dtype=object)
    return tuple(None if (v is None or (isinstance(v, float) and np.isnan(v))) else v for v in values)


def transform_select(m: FeatureMatrix, policy: SelectionPolicy | None = None
                     ) -> tuple[FeatureMatrix, SelectionReport]:
    policy = policy or SelectionPolicy()
    report = SelectionReport()
    data = m.data.copy()
    kinds = dict(m.kinds)
    for p in range(policy.max_passes):
        before = (list(data.columns), list(data.index), data.isna().sum().sum())
        snapshot = data.copy()
        data, kinds = _one_pass(data, kinds, policy, report, p)
        report.passes = p + 1
        after = (list(data.columns), list(data.index), data.isna().sum().sum())
        if before == after and data.equals(snapshot):
            break
    return FeatureMatrix(data, kinds), report


def _drop_columns(data, kinds, names):
    for n in names:
        kinds.pop(n)
    return data.drop(columns=list(names))


def _one_pass(data: pd.DataFrame, kinds: dict, policy: SelectionPolicy,
              report: SelectionReport, p: int):
    # 1. identifier-like columns
    ident = [c for c in data.columns if c in set(policy.identifier_columns)]
    data = _drop_columns(data, kinds, ident)
    report.log(p, 1, "column", ident)

    # 2. constant columns
    const = [c for c in data.columns if _is_constant(data[c], kinds[c])]
    data = _drop_columns(data, kinds, const)
    report.log(p, 2, "column", const)

    # 3. duplicate columns (identical value vectors, first occurrence kept)
    seen: dict[tuple, str] = {}
    dup = []
    twin = {}
    for c in data.columns:
        key = (kinds[c], _column_key(data[c]))
        if key in seen:
            dup.append(c)
            twin[c] = seen[key]
        else:
            seen[key] = c
    data = _drop_columns(data, kinds, dup)
    report.log(p, 3, "column", dup, duplicate_of=twin)

    # 4. rows with too many missing cells
    if data.shape[1]:
        row_frac = _missing(data).mean(axis=1)
        bad_rows = list(data.index[row_frac.to_numpy() > policy.max_row_missing])
    else:
        bad_rows = []
    data = data.drop(index=bad_rows)
    report.log(p, 4, "row", bad_rows)

    # 5. columns with too many missing cells
    if len(data):
        col_frac = _missing(data).mean(axis=0)
        sparse_cols = [c for c in data.columns if col_frac[c] > policy.max_column_missing]
    else:
        sparse_cols = []
    data = _drop_columns(data, kinds, sparse_cols)
    report.log(p, 5, "column", sparse_cols)

    # 6. categorical gaps become "Other"
    filled = {}
    for c in [c for c in data.columns if kinds[c] == CATEGORICAL]:
        miss = data[c].isna()
        if miss.any():
            filled[c] = int(miss.sum())
            col = data[c].astype(object)
            col[miss] = OTHER
            data[c] = col
    report.log(p, 6, "cell", list(filled), counts=filled)

    # 7. numeric gaps become the column mean
    imputed = {}
    for c in [c for c in data.columns if kinds[c] == NUMERIC]:
        miss = data[c].isna()
        if miss.any():
            mean = float(data[c].mean())
            imputed[c] = mean
            data[c] = data[c].fillna(mean)
    report.log(p, 7, "cell", list(imputed), means=imputed)

    # 8. keep the most frequent categories, fold the rest into "Other"
    capped = {}
    for c in [c for c in data.columns if kinds[c] == CATEGORICAL]:
        counts = data[c][data[c] != OTHER].value_counts()
        if len(counts) <= policy.max_categories:
            continue
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
        keep = {k for k, _ in ranked[: policy.max_categories]}
        folded = sorted(str(k) for k, _ in ranked[policy.max_categories:])
        col = data[c].astype(object)
        col[~col.isin(keep)] = OTHER
        data[c] = col
        capped[c] = folded
    report.log(p, 8, "cell", list(capped), folded=capped)

    # 9. drop the later column of each highly correlated numeric pair
    corr_drop: list[str] = []
    pairs = {}
    if policy.correlation_threshold is not None and len(data) > 1:
        num = [c for c in data.columns if kinds[c] == NUMERIC]
        if len(num) > 1:
            x = data[num].to_numpy(dtype=float)
            x = x - x.mean(axis=0)
            norm = np.sqrt((x * x).sum(axis=0))
            ok = norm > 0
            z = np.zeros_like(x)
            z[:, ok] = x[:, ok] / norm[ok]
            r = np.abs(z.T @ z)
            kept: list[int] = []
            for j in range(len(num)):
                hit = [i for i in kept if r[i, j] > policy.correlation_threshold]
                if hit:
                    corr_drop.append(num[j])
                    pairs[num[j]] = num[hit[0]]
                else:
                    kept.append(j)
    data = _drop_columns(data, kinds, corr_drop)
    report.log(p, 9, "column", corr_drop, correlated_with=pairs)
    return data, kinds
