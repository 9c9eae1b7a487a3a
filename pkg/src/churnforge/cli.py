"""Command-line entry point: one subcommand per pipeline stage.

Every command reads the same JSON config and writes its artifacts below
``workdir`` together with a ``manifest.json`` holding the config hash, the
seed and sha256 digests of inputs and outputs::

    data/        cdr.csv profiles.csv labels.csv                (generate)
    graph/       edges.csv sna_features.csv                     (graph)
    features/    dataset.csv schema.json selection_report.json  (features)
    model/       model.json cv_report.json split.json           (train)
    eval/        roc.csv roc.svg importance.csv importance.svg metrics.json (evaluate)
    experiment/  report.json report.txt *.svg                   (experiment)

Exit codes: 0 success, 2 invalid config or input, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from ._util import atomic_write_text, file_digest, write_json
from .cdr_ingest import IngestError
from .config import ConfigError, PipelineConfig, load_config

log = logging.getLogger("churnforge")

COMMANDS = ("generate", "graph", "features", "train", "evaluate", "experiment")


def _manifest(cfg: PipelineConfig, stage_dir: Path, command: str, inputs: list[Path],
              outputs: list[Path], extra: dict | None = None) -> None:
    def rel(p: Path) -> str:
        try:
            return str(Path(p).resolve().relative_to(cfg.workdir.resolve()))
        except ValueError:
            return str(p)

    doc = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "inputs": {rel(p): file_digest(p) for p in sorted(inputs)},
        "outputs": {rel(p): file_digest(p) for p in sorted(outputs)},
    }
    if extra:
        doc.update(extra)
    write_json(stage_dir / "manifest.json", doc)


# --- commands -------------------------------------------------------------

def cmd_generate(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from .synthetic import generate_synthetic

    out = cfg.data_dir
    paths = generate_synthetic(cfg.synthetic, cfg.seed, out)
    outputs = [paths["cdr"], paths["profiles"], paths["labels"]]
    _manifest(cfg, out, "generate", [], outputs, {"synthetic": cfg.synthetic.to_dict()})
    return outputs


def cmd_graph(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from . import pipeline as pl
    from .cdr_ingest import ParseReport, read_cdr_frame
    from .social_graph import write_edge_list, write_sna_csv

    cdr_path = pl.require(cfg.cdr_path, "generate")
    report = ParseReport()
    cdr = read_cdr_frame(cdr_path, strict=strict, report=report)
    g, sna = pl.graph_and_sna(cdr, pl.baseline_ts(cfg), cfg.sna_window_months, cfg)
    out = cfg.workdir / "graph"
    edges, feats = out / "edges.csv", out / "sna_features.csv"
    write_edge_list(edges, g)
    write_sna_csv(feats, sna)
    _manifest(cfg, out, "graph", [cdr_path], [edges, feats],
              {"nodes": g.n_nodes, "edges": int(len(g.src)), "skipped_rows": len(report.errors)})
    return [edges, feats]


def cmd_features(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from . import pipeline as pl
    from .features import write_matrix
    from .social_graph import read_sna_csv

    raw = pl.load_raw(cfg, strict)
    sna_path = pl.require(cfg.workdir / "graph" / "sna_features.csv", "graph")
    sna = read_sna_csv(sna_path)
    base = pl.baseline_ts(cfg)
    stat = pl.stat_matrix(raw, base, cfg.statistical_window_months, cfg) \
        if cfg.feature_set != "SNA" else None
    ids = stat.ids if stat is not None else pd.Index(sorted(raw.profiles.index), name="id")
    m = pl.feature_set(cfg.feature_set, stat, sna, ids, cfg)
    ds, report = pl.prepare(m, raw, base, cfg)
    out = cfg.workdir / "features"
    csv, schema, rep = out / "dataset.csv", out / "schema.json", out / "selection_report.json"
    write_matrix(csv, schema, ds.matrix, ds.labels,
                 extra={"feature_set": cfg.feature_set, "baseline": base.isoformat()})
    write_json(rep, report.to_dict())
    inputs = [cfg.cdr_path, cfg.profiles_path, cfg.labels_path, sna_path]
    _manifest(cfg, out, "features", inputs, [csv, schema, rep],
              {"rows": len(ds), "columns": len(ds.matrix.names), "class_counts": ds.class_counts()})
    return [csv, schema, rep]


def _load_dataset(cfg: PipelineConfig):
    from . import pipeline as pl
    from .features import LabeledDataset, read_matrix

    out = cfg.workdir / "features"
    csv = pl.require(out / "dataset.csv", "features")
    schema = pl.require(out / "schema.json", "features")
    m, labels, meta = read_matrix(csv, schema)
    if labels is None:
        raise RuntimeError(f"{csv} carries no label column; rerun `churnforge features`")
    return LabeledDataset(m, labels, pd.Timestamp(meta["baseline"])), [csv, schema]


def cmd_train(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from ._util import derive_seed
    from .learners import LearnerSpec, cross_validate, resample, save_model, split_train_test, train

    ds, inputs = _load_dataset(cfg)
    lc = cfg.learner
    spec = LearnerSpec(lc.kind, dict(lc.params), lc.sampling)
    tr, te = split_train_test(ds, lc.train_fraction, cfg.seed)
    cv_doc = {"learner": lc.kind, "sampling": spec.sampling.value, "k": lc.cv_folds}
    params = dict(lc.params)
    if lc.grid:
        res = cross_validate(tr, spec, lc.cv_folds, lc.grid, derive_seed(cfg.seed, "cv"), threads)
        params = res.best_params
        cv_doc.update(res.to_dict())
    else:
        cv_doc.update({"best_params": params, "grid": []})
    fit = resample(tr, spec.sampling, derive_seed(cfg.seed, "train_resample"))
    model = train(spec.kind, fit, params, seed=derive_seed(cfg.seed, "train"), threads=threads)
    out = cfg.workdir / "model"
    mpath, cvpath, spath = out / "model.json", out / "cv_report.json", out / "split.json"
    save_model(model, mpath)
    write_json(cvpath, cv_doc)
    write_json(spath, {"train": list(tr.matrix.ids), "test": list(te.matrix.ids)})
    _manifest(cfg, out, "train", inputs, [mpath, cvpath, spath],
              {"train_rows": len(fit), "test_rows": len(te)})
    return [mpath, cvpath, spath]


def cmd_evaluate(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from . import pipeline as pl
    from . import plotting
    from .evaluation import feature_importance, roc_auc
    from .learners import load_model, predict

    ds, inputs = _load_dataset(cfg)
    mpath = pl.require(cfg.workdir / "model" / "model.json", "train")
    spath = pl.require(cfg.workdir / "model" / "split.json", "train")
    model = load_model(mpath)
    test_ids = json.loads(spath.read_text())["test"]
    te = ds.subset(test_ids)
    roc = roc_auc(predict(model, te.matrix), te.labels)
    ranking = feature_importance(model)
    out = cfg.workdir / "eval"
    paths = {k: out / k for k in ("roc.csv", "roc.svg", "importance.csv", "importance.svg",
                                  "metrics.json")}
    roc.write_csv(paths["roc.csv"])
    plotting.roc_figure({model.kind.value: roc}, paths["roc.svg"])
    lines = ["feature,gain,share"] + [f"{f},{g!r},{s!r}" for f, g, s in ranking]
    atomic_write_text(paths["importance.csv"], "\n".join(lines) + "\n")
    plotting.importance_figure(ranking, paths["importance.svg"])
    write_json(paths["metrics.json"], {"auc": roc.auc, "model": model.kind.value,
                                       "test_rows": len(te), "churn_in_test": int(te.y.sum())})
    outputs = list(paths.values())
    _manifest(cfg, out, "evaluate", inputs + [mpath, spath], outputs, {"auc": roc.auc})
    return outputs


def cmd_experiment(cfg: PipelineConfig, strict: bool = False, threads: int = 1) -> list[Path]:
    from . import pipeline as pl
    from .evaluation import run_experiment_grid

    raw = pl.load_raw(cfg, strict)
    out = cfg.workdir / "experiment"
    report = run_experiment_grid(cfg, raw, out, threads, progress=log.info)
    rj, rt = out / "report.json", out / "report.txt"
    atomic_write_text(rj, report.to_json())
    atomic_write_text(rt, report.render_text())
    outputs = [rj, rt] + sorted(out.glob("*.svg"))
    _manifest(cfg, out, "experiment", [cfg.cdr_path, cfg.profiles_path, cfg.labels_path], outputs)
    return outputs


HANDLERS = {
    "generate": cmd_generate,
    "graph": cmd_graph,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="churnforge", description="Churn prediction pipeline over CDR data.")
    ap.add_argument("--version", action="version", version=f"churnforge {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON pipeline config")
    ap.add_argument("--strict", action="store_true", help="fail on the first malformed input row")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for forests and CV")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors are 2, --help/--version are 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        outputs = HANDLERS[args.command](cfg, strict=args.strict, threads=args.threads)
    except (ConfigError, IngestError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in outputs:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
