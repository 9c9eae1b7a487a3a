"""Stage helpers shared by the CLI commands and the experiment grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from ._util import month_bounds, utc_timestamp
from .cdr_ingest import ParseReport, labels_series, parse_labels, parse_profiles, profiles_frame, read_cdr_frame
from .config import PipelineConfig
from .features import FeatureMatrix, LabeledDataset, assemble, merge, sna_matrix, statistical_features
from .selection import SelectionReport, transform_select
from .social_graph import RankConfig, build_graph, sna_feature_frame, _partition_array

log = logging.getLogger(__name__)


class MissingArtifact(RuntimeError):
    """An input is absent; the message names the command that produces it."""

    def __init__(self, path, producer: str):
        super().__init__(f"missing {path}; run `churnforge {producer}` first")
        self.path = Path(path)
        self.producer = producer


def require(path, producer: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path, producer)
    return path


@dataclass
class RawData:
    cdr: pd.DataFrame
    profiles: pd.DataFrame
    labels: pd.Series


def load_raw(cfg: PipelineConfig, strict: bool = False) -> RawData:
    report = ParseReport()
    cdr = read_cdr_frame(require(cfg.cdr_path, "generate"), strict=strict, report=report)
    profiles = parse_profiles(require(cfg.profiles_path, "generate"), strict=strict, report=report)
    labels = parse_labels(require(cfg.labels_path, "generate"), strict=strict, report=report)
    if report.errors:
        log.warning("skipped %d malformed input rows", len(report.errors))
    return RawData(cdr, profiles_frame(profiles), labels_series(labels))


def baseline_ts(cfg: PipelineConfig) -> pd.Timestamp:
    return utc_timestamp(cfg.baseline_date)


def window(baseline: pd.Timestamp, months: int) -> tuple[pd.Timestamp, pd.Timestamp]:
    b = month_bounds(baseline, months)
    return pd.Timestamp(int(b[months]), unit="s", tz="UTC"), baseline


def rank_config(cfg: PipelineConfig) -> RankConfig:
    return RankConfig(damping=cfg.damping, tol=cfg.tol, max_iter=cfg.max_iter)


def graph_and_sna(cdr: pd.DataFrame, baseline, months: int, cfg: PipelineConfig):
    """The social graph over the trailing window and SNA rows for its HOME nodes."""
    g = build_graph(cdr, window(baseline, months))
    frame = sna_feature_frame(g, None, rank_config(cfg))
    return g, frame[_partition_array(g, None) == "HOME"]


def stat_matrix(raw: RawData, baseline, months: int, cfg: PipelineConfig) -> FeatureMatrix:
    return statistical_features(raw.cdr, raw.profiles, baseline, months, cfg.categorical_columns)


def feature_set(name: str, stat: FeatureMatrix | None, sna: pd.DataFrame | None, ids,
                cfg: PipelineConfig) -> FeatureMatrix:
    """STATISTICAL, SNA or COMBINED matrix over ``ids``."""
    if name == "STATISTICAL":
        return stat
    sna_m = sna_matrix(sna, ids=ids, damping=cfg.damping)
    if name == "SNA":
        return sna_m
    return merge(stat, sna_m, damping=cfg.damping)


def prepare(m: FeatureMatrix, raw: RawData, baseline, cfg: PipelineConfig
            ) -> tuple[LabeledDataset, SelectionReport]:
    selected, report = transform_select(m, cfg.selection)
    ds = assemble(selected, raw.labels, baseline, cfg.exclusion_months, raw.profiles)
    return ds, report
