import json

import pytest

from churnforge.cli import main
from churnforge.config import ConfigError, config_from_dict, load_config

SMALL = {
    "seed": 5,
    "workdir": "work",
    "synthetic": {"n_customers": 400},
    "learner": {"kind": "XGB_STYLE", "params": {"n_trees": 10}, "grid": {"max_depth": [2, 4]},
                "cv_folds": 3},
    "experiment": {"algorithms": ["XGB_STYLE", "DECISION_TREE"], "statistical_windows": [1, 2],
                   "sna_windows": [1, 2], "algorithm_params": {"XGB_STYLE": {"n_trees": 10}}},
}


def _config(tmp_path, doc=SMALL, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _config(root)
    codes = {cmd: main([cmd, "--config", str(cfg)])
             for cmd in ("generate", "graph", "features", "train", "evaluate")}
    return root, cfg, codes


def test_chain_succeeds(chain):
    root, _, codes = chain
    assert set(codes.values()) == {0}
    work = root / "work"
    for rel in ("data/cdr.csv", "graph/sna_features.csv", "features/dataset.csv",
                "features/selection_report.json", "model/model.json", "model/cv_report.json",
                "eval/roc.csv", "eval/roc.svg", "eval/importance.svg", "eval/metrics.json"):
        assert (work / rel).is_file(), rel
    metrics = json.loads((work / "eval/metrics.json").read_text())
    assert 0.5 < metrics["auc"] <= 1.0


def test_manifest_records_hashes(chain):
    root, _, _ = chain
    man = json.loads((root / "work/model/manifest.json").read_text())
    assert man["command"] == "train" and man["seed"] == 5
    assert "features/dataset.csv" in man["inputs"]
    assert all(len(h) == 64 for h in man["outputs"].values())


def test_rerun_is_deterministic(chain):
    root, cfg, _ = chain
    before = (root / "work/model/manifest.json").read_bytes()
    assert main(["train", "--config", str(cfg), "--threads", "2"]) == 0
    assert (root / "work/model/manifest.json").read_bytes() == before


def test_experiment_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    assert main(["generate", "--config", str(cfg)]) == 0
    assert main(["experiment", "--config", str(cfg)]) == 0
    out = tmp_path / "work/experiment"
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["experiment", "--config", str(cfg)]) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second
    assert {"report.json", "report.txt", "roc_combined.svg"} <= set(first)
    assert "COMBINED" in first["report.txt"].decode()


def test_train_before_features_names_the_producer(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 1
    assert "features" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [
    {"damping": 1.2},
    {"statistical_window_months": 0},
    {"learner": {"kind": "SVM"}},
    {"no_such_key": 1},
    {"seed": -1},
])
def test_invalid_config_exit_2(tmp_path, patch):
    assert main(["generate", "--config", str(_config(tmp_path, {**SMALL, **patch}))]) == 2


def test_missing_seed_exit_2(tmp_path):
    doc = {k: v for k, v in SMALL.items() if k != "seed"}
    assert main(["generate", "--config", str(_config(tmp_path, doc))]) == 2
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_bad_arguments_exit_2(tmp_path):
    assert main(["frobnicate", "--config", "x.json"]) == 2
    assert main(["graph", "--config", str(tmp_path / "absent.json")]) == 2


def test_paths_resolve_against_config_dir(tmp_path):
    cfg = load_config(_config(tmp_path))
    assert cfg.workdir == tmp_path / "work"
    assert cfg.cdr_path == tmp_path / "work/data/cdr.csv"


def test_digest_ignores_paths(tmp_path):
    a = config_from_dict(SMALL, base_dir=tmp_path)
    b = config_from_dict({**SMALL, "workdir": "elsewhere"}, base_dir=tmp_path)
    assert a.digest() == b.digest()
    c = config_from_dict({**SMALL, "seed": 6}, base_dir=tmp_path)
    assert a.digest() != c.digest()
