"""Command-line harness: dataset generation, training, evaluation, estimator
benchmarks, and level-distribution statistics.

Every command is a pure function of its JSON config plus input files; outputs
are written under ``--out`` and are byte-reproducible for a fixed config and
seed (the training log's wall-seconds column is the one timing field and is
excluded from that guarantee).  Exit codes: 0 success, 2 config/schema error,
3 data error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, TrainingDiverged
from .metrics import estimated_regret, evaluate_metrics, level_distribution
from .scorer import ProbabilityModel, load_checkpoint, save_checkpoint
from .synth import SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from .toy import ESTIMATORS, PRECISIONS, run_toy_grid
from .train import METHODS, TrainConfig, train
from .tree import Tree, build_random_tree, tree_from_json


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _expect_keys(doc: dict, required: set[str], optional: set[str] = frozenset()) -> None:
    missing = required - set(doc)
    unknown = set(doc) - required - optional
    if missing:
        raise ConfigError(f"config is missing keys: {sorted(missing)}")
    if unknown:
        raise ConfigError(f"config has unknown keys: {sorted(unknown)}")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _load_tree(path: str | Path) -> Tree:
    p = Path(path)
    if not p.exists():
        raise DataError(f"tree file not found: {p}")
    return tree_from_json(p.read_text())


def cmd_synth_gen(config: dict, out: Path) -> None:
    _expect_keys(
        config,
        {"num_targets", "feature_dim", "bias_c", "n_train", "n_test", "seed"},
    )
    try:
        spec = SyntheticSpec(
            num_targets=int(config["num_targets"]),
            feature_dim=int(config["feature_dim"]),
            bias_c=float(config["bias_c"]),
            n_train=int(config["n_train"]),
            n_test=int(config["n_test"]),
            seed=int(config["seed"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    train_set, test_set, _ = gen_synthetic(spec)
    files = {}
    for split, instances in (("train", train_set), ("test", test_set)):
        if not instances:
            continue
        header = {
            "M": spec.num_targets,
            "d": spec.feature_dim,
            "c": spec.bias_c,
            "seed": spec.seed,
            "split": split,
        }
        fname = f"{split}.jsonl"
        save_dataset(out / fname, instances, header)
        files[split] = fname
    manifest = {"config": config, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


def cmd_train(config: dict, out: Path) -> None:
    _expect_keys(
        config,
        {"method", "dataset", "epochs", "batch_size", "seed"},
        {
            "tree",
            "tree_arity",
            "tree_seed",
            "model",
            "learning_rate",
            "beam_size_k",
            "negatives_per_level",
            "adam_beta1",
            "adam_beta2",
            "adam_epsilon",
        },
    )
    _require(config["method"] in METHODS, f"method must be one of {METHODS}")
    try:
        tc = TrainConfig(
            method=config["method"],
            epochs=int(config["epochs"]),
            batch_size=int(config["batch_size"]),
            learning_rate=float(config.get("learning_rate", 0.01)),
            beam_size_k=int(config.get("beam_size_k", 50)),
            negatives_per_level=int(config.get("negatives_per_level", 3)),
            adam_beta1=float(config.get("adam_beta1", 0.9)),
            adam_beta2=float(config.get("adam_beta2", 0.999)),
            adam_epsilon=float(config.get("adam_epsilon", 1e-8)),
            seed=int(config["seed"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    model = ProbabilityModel(config["model"]) if "model" in config else tc.expected_model
    tc.check_model(model)

    header, instances = load_dataset(config["dataset"])
    if "tree" in config:
        tree = _load_tree(config["tree"])
        if tree.num_targets != header["M"]:
            raise DataError("tree and dataset disagree on the number of targets")
    else:
        arity = int(config.get("tree_arity", 2))
        tree_seed = int(config.get("tree_seed", tc.seed))
        tree = build_random_tree(header["M"], arity, tree_seed)
    params, log = train(instances, tree, model, tc)
    save_checkpoint(out / "checkpoint.json", params, model)
    (out / "tree.json").write_text(tree.to_json())
    log.to_csv(out / "train_log.csv")


def cmd_evaluate(config: dict, out: Path) -> None:
    _expect_keys(
        config,
        {"checkpoint", "tree", "dataset", "beam_size_k", "m_values"},
        {"mode"},
    )
    mode = config.get("mode", "both")
    _require(mode in ("regret", "prf", "both"), "mode must be regret, prf, or both")
    k = int(config["beam_size_k"])
    m_values = [int(m) for m in config["m_values"]]
    _require(len(m_values) > 0 and all(1 <= m <= k for m in m_values), "need 1 <= m <= k")
    params, model = load_checkpoint(config["checkpoint"])
    tree = _load_tree(config["tree"])
    _header, instances = load_dataset(config["dataset"])
    if not instances:
        raise DataError("evaluation dataset is empty")

    summary: dict = {"config": config, "outputs": {}}
    if mode in ("regret", "both"):
        if any(inst.eta is None for inst in instances):
            raise DataError("regret evaluation requires eta in every dataset record")
        report = estimated_regret(tree, params, model, instances, k, m_values)
        _write_csv(out / "regret.csv", ["k", "m", "mean_regret", "std_err", "instances"], report.rows())
        summary["outputs"]["regret"] = report.rows()
    if mode in ("prf", "both"):
        mreport = evaluate_metrics(tree, params, model, instances, k, m_values)
        _write_csv(
            out / "prf.csv",
            ["m", "precision", "recall", "f_measure", "instances", "skipped"],
            mreport.rows(),
        )
        summary["outputs"]["prf"] = mreport.rows()
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))


def cmd_toy(config: dict, out: Path) -> None:
    _expect_keys(
        config,
        {"num_targets", "arity", "estimators", "sample_sizes", "beam_sizes", "m_values", "runs", "seed"},
        {"table_precision"},
    )
    estimators = list(config["estimators"])
    _require(all(e in ESTIMATORS for e in estimators), f"estimators must be among {ESTIMATORS}")
    sample_sizes = [None if n in (None, "inf") else int(n) for n in config["sample_sizes"]]
    precision = config.get("table_precision", "single")
    _require(precision in PRECISIONS, f"table_precision must be one of {PRECISIONS}")
    try:
        cells = run_toy_grid(
            int(config["num_targets"]),
            int(config["arity"]),
            estimators,
            sample_sizes,
            [int(k) for k in config["beam_sizes"]],
            [int(m) for m in config["m_values"]],
            int(config["runs"]),
            int(config["seed"]),
            table_precision=precision,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    rows = [
        {
            "estimator": c.estimator,
            "N": "inf" if c.sample_size is None else c.sample_size,
            "k": c.k,
            "m": c.m,
            "mean_regret": c.mean_regret,
            "std_err": c.std_err,
            "runs": c.runs,
        }
        for c in cells
    ]
    _write_csv(out / "toy.csv", ["estimator", "N", "k", "m", "mean_regret", "std_err", "runs"], rows)


def cmd_stats(config: dict, out: Path) -> None:
    _expect_keys(config, {"dataset", "tree", "level"})
    tree = _load_tree(config["tree"])
    _header, instances = load_dataset(config["dataset"])
    try:
        dist = level_distribution([inst.targets for inst in instances], tree, int(config["level"]))
    except ValueError as e:
        if isinstance(e, DataError):
            raise
        raise ConfigError(str(e)) from e
    rows = [{"rank": i + 1, "share": float(v)} for i, v in enumerate(dist)]
    _write_csv(out / "level_distribution.csv", ["rank", "share"], rows)


_COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "toy": cmd_toy,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="treebeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](config, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
