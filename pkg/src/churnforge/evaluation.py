"""ROC/AUC, gain-based feature ranking and the experiment grid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ._util import atomic_write_text


class UndefinedAuc(ValueError):
    pass


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry is +inf (nothing predicted positive)
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def to_csv(self) -> str:
        lines = ["fpr,tpr,threshold"]
        lines += [f"{f!r},{t!r},{th!r}" for f, t, th in self.points]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scores, pd.Series):
        if isinstance(labels, pd.Series):
            labels = labels.reindex(scores.index)
        s = scores.to_numpy(dtype=float)
    else:
        s = np.asarray(scores, dtype=float)
    lab = labels.to_numpy() if isinstance(labels, pd.Series) else np.asarray(labels)
    if lab.dtype.kind in "OUS":
        y = (lab == "CHURN").astype(np.int64)
    else:
        y = lab.astype(np.int64)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    return s, y


def roc_auc(scores, labels) -> RocCurve:
    """ROC over every distinct score; equal scores move the curve together,
    which is exactly the half-credit tie rule."""
    s, y = _as_arrays(scores, labels)
    pos = int(y.sum())
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise UndefinedAuc("AUC is undefined when only one class is present")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(y_sorted)[last]].astype(np.int64)
    fp = np.r_[0, (last + 1) - tp[1:]].astype(np.int64)
    # trapezoids in integer units: sum (dFP) * (TP_prev + TP_cur) / (2 P N)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * pos * neg)
    thresholds = np.r_[np.inf, s_sorted[last]]
    return RocCurve(fp / neg, tp / pos, thresholds, auc)


def auc_score(labels, scores) -> float:
    return roc_auc(scores, labels).auc


def feature_importance(model) -> list[tuple[str, float, float]]:
    """Features ranked by total split gain; features never split on are left out."""
    gains = {f: g for f, g in model.feature_gain.items() if g > 0}
    total = sum(gains.values())
    ranked = sorted(gains.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(f, g, g / total) for f, g in ranked]


# --- experiment grid ------------------------------------------------------

@dataclass
class ExperimentReport:
    config_hash: str
    seed: int
    dataset: dict
    cells: list[dict]
    window_sweep: dict[str, list[dict]]
    importance: list[dict]

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed, "dataset": self.dataset,
                "cells": self.cells, "window_sweep": self.window_sweep,
                "importance": self.importance}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def cell(self, feature_set: str, algorithm: str, sampling: str | None = None) -> dict | None:
        for c in self.cells:
            if c["feature_set"] == feature_set and c["algorithm"] == algorithm and \
                    (sampling is None or c["sampling"] == sampling):
                return c
        return None

    def render_text(self) -> str:
        return render_report(self.to_dict())


def _fmt_auc(v) -> str:
    return "-" if v is None else f"{100 * v:.2f}%"


def render_report(d: dict) -> str:
    """Plain-text tables: AUC by feature set, by sampling mode, by window."""
    out = [f"config {d['config_hash']}  seed {d['seed']}",
           f"rows {d['dataset']['rows']}  churn {d['dataset']['churn']}  "
           f"train {d['dataset']['train_rows']}  test {d['dataset']['test_rows']}", ""]
    cells = d["cells"]
    algos = list(dict.fromkeys(c["algorithm"] for c in cells))

    def lookup(fs, algo, mode=None, default_only=False):
        for c in cells:
            if c["feature_set"] == fs and c["algorithm"] == algo:
                if default_only and not c["default_sampling"]:
                    continue
                if mode is not None and c["sampling"] != mode:
                    continue
                return c["auc"]
        return None

    sets = [fs for fs in ("STATISTICAL", "SNA", "COMBINED") if any(c["feature_set"] == fs for c in cells)]
    if sets and algos:
        out.append("AUC by feature set (default sampling per algorithm)")
        out.append(f"{'algorithm':<16}" + "".join(f"{s:>14}" for s in sets))
        for a in algos:
            out.append(f"{a:<16}" + "".join(f"{_fmt_auc(lookup(s, a, default_only=True)):>14}" for s in sets))
        out.append("")
    modes = list(dict.fromkeys(c["sampling"] for c in cells if c["feature_set"] == "COMBINED"))
    if modes:
        out.append("AUC by sampling mode (COMBINED features)")
        out.append(f"{'algorithm':<16}" + "".join(f"{m:>14}" for m in modes))
        for a in algos:
            out.append(f"{a:<16}" + "".join(f"{_fmt_auc(lookup('COMBINED', a, m)):>14}" for m in modes))
        out.append("")
    for family, pts in d["window_sweep"].items():
        if not pts:
            continue
        out.append(f"Window sweep, {family} features")
        out.append("".join(f"{'M' + str(p['months']):>9}" for p in pts))
        out.append("".join(f"{_fmt_auc(p['auc']):>9}" for p in pts))
        out.append("")
    if d["importance"]:
        out.append("Top features by gain (COMBINED)")
        for r in d["importance"][:15]:
            out.append(f"  {r['feature']:<40}{r['share']:>8.4f}")
    return "\n".join(out).rstrip() + "\n"


def run_experiment_grid(cfg, raw=None, outdir=None, threads: int = 1,
                        progress=None) -> ExperimentReport:
    """Train and score every configured cell on one shared train/test split.

    Feature-set cells use each algorithm's default sampling; sampling cells
    use COMBINED features. The window sweeps retrain ``sweep_algorithm`` on
    statistical features over 1..9 months and on SNA features over graph
    windows of several lengths. With ``outdir`` the ROC, importance and
    sweep figures are written there.
    """
    from . import pipeline as pl
    from .learners import DEFAULT_SAMPLING, ModelKind, SamplingMode, predict, resample, split_train_test, train
    from ._util import derive_seed

    say = progress or (lambda msg: None)
    raw = raw if raw is not None else pl.load_raw(cfg)
    base = pl.baseline_ts(cfg)
    ex = cfg.experiment
    master = cfg.seed
    chash = cfg.digest()

    stat_cache: dict[int, object] = {}
    sna_cache: dict[int, pd.DataFrame] = {}

    def stat(months):
        if months not in stat_cache:
            say(f"statistical features, {months} month window")
            stat_cache[months] = pl.stat_matrix(raw, base, months, cfg)
        return stat_cache[months]

    def sna(months):
        if months not in sna_cache:
            say(f"SNA features, {months} month window")
            sna_cache[months] = pl.graph_and_sna(raw.cdr, base, months, cfg)[1]
        return sna_cache[months]

    def dataset(fs, stat_months=None, sna_months=None):
        s = stat(stat_months or cfg.statistical_window_months)
        n = sna(sna_months or cfg.sna_window_months) if fs != "STATISTICAL" else None
        m = pl.feature_set(fs, s, n, s.ids, cfg)
        return pl.prepare(m, raw, base, cfg)[0]

    sets = {fs: dataset(fs) for fs in ex.feature_sets or ["COMBINED"]}
    common = None
    for ds in sets.values():
        common = ds.matrix.ids if common is None else common.intersection(ds.matrix.ids)
    ref = next(iter(sets.values())).subset(common.sort_values())
    tr_ref, te_ref = split_train_test(ref, cfg.learner.train_fraction, master)
    train_ids, test_ids = tr_ref.matrix.ids, te_ref.matrix.ids

    def params_for(algo):
        return dict(ex.algorithm_params.get(algo, {}))

    def fit_score(ds, algo, mode, tag):
        tr = ds.subset(train_ids.intersection(ds.matrix.ids, sort=False))
        te = ds.subset(test_ids.intersection(ds.matrix.ids, sort=False))
        tr = resample(tr, mode, derive_seed(master, f"resample:{tag}"))
        model = train(algo, tr, params_for(algo), seed=derive_seed(master, f"model:{tag}"),
                      threads=threads)
        scores = predict(model, te.matrix)
        return model, roc_auc(scores, te.labels), len(tr), len(te)

    cells: list[dict] = []
    done: dict[tuple, dict] = {}
    rocs: dict[str, RocCurve] = {}
    importance: list[dict] = []
    jobs = []
    for fs in ex.feature_sets:
        for algo in ex.algorithms:
            jobs.append((fs, algo, DEFAULT_SAMPLING[ModelKind(algo)].value))
    if "COMBINED" in sets:
        for algo in ex.algorithms:
            for mode in ex.sampling_modes:
                jobs.append(("COMBINED", algo, mode))
    for fs, algo, mode in jobs:
        key = (fs, algo, mode)
        if key in done:
            continue
        tag = f"{fs}:{algo}:{mode}"
        say(f"cell {tag}")
        model, roc, n_tr, n_te = fit_score(sets[fs], algo, SamplingMode(mode), tag)
        default = DEFAULT_SAMPLING[ModelKind(algo)].value == mode
        cell = {"feature_set": fs, "algorithm": algo, "sampling": mode, "default_sampling": default,
                "auc": roc.auc, "train_rows": n_tr, "test_rows": n_te,
                "n_features": len(sets[fs].matrix.names),
                "seed": derive_seed(master, f"model:{tag}"), "config_hash": chash}
        done[key] = cell
        cells.append(cell)
        if fs == "COMBINED" and default:
            rocs[algo] = roc
            if algo == ex.sweep_algorithm:
                importance = [{"feature": f, "gain": g, "share": s}
                              for f, g, s in feature_importance(model)]

    sweep: dict[str, list[dict]] = {"STATISTICAL": [], "SNA": []}
    mode = DEFAULT_SAMPLING[ModelKind(ex.sweep_algorithm)]
    for months in ex.statistical_windows:
        tag = f"sweep:STATISTICAL:{months}"
        say(f"sweep {tag}")
        ds = dataset("STATISTICAL", stat_months=months)
        _, roc, _, _ = fit_score(ds, ex.sweep_algorithm, mode, tag)
        sweep["STATISTICAL"].append({"months": months, "auc": roc.auc,
                                     "seed": derive_seed(master, f"model:{tag}"), "config_hash": chash})
    for months in ex.sna_windows:
        tag = f"sweep:SNA:{months}"
        say(f"sweep {tag}")
        ds = dataset("SNA", sna_months=months)
        _, roc, _, _ = fit_score(ds, ex.sweep_algorithm, mode, tag)
        sweep["SNA"].append({"months": months, "auc": roc.auc,
                             "seed": derive_seed(master, f"model:{tag}"), "config_hash": chash})

    y_ref = ref.y
    report = ExperimentReport(
        config_hash=chash, seed=master,
        dataset={"rows": len(ref), "churn": int(y_ref.sum()), "train_rows": len(train_ids),
                 "test_rows": len(test_ids)},
        cells=cells, window_sweep=sweep, importance=importance)

    if outdir is not None:
        from . import plotting
        outdir = Path(outdir)
        if rocs:
            plotting.roc_figure(rocs, outdir / "roc_combined.svg", "ROC, combined features")
        if importance:
            plotting.importance_figure([(r["feature"], r["gain"], r["share"]) for r in importance],
                                       outdir / "importance.svg")
        if any(sweep.values()):
            plotting.sweep_figure({k: [(p["months"], p["auc"]) for p in v] for k, v in sweep.items()},
                                  outdir / "window_sweep.svg")
    return report
