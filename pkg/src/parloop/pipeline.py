"""End-to-end pipeline: configuration, stages and their on-disk artifacts.

Every stage reads its inputs from and writes its outputs to the run
directory, so running the stages one by one produces the same files as a
single ``crossval`` call. Each stage directory holds a ``config_hash.txt``.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .classifier import Dataset, Hyperparameters, ModelConfig, evaluate, predict, train
from .classifier.checkpoint import save_checkpoint
from .dependence import analyze
from .errors import ConfigError, DataError
from .evaluation import FoldReport, confusion, emit_report, kfold_split
from .ga import GAConfig, evolve
from .parse import parse_source
from .tokenizer import encode_batch, load_vocab, save_vocab, train_vocab
from .loop_model import from_json as loop_from_json, validate

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PARLOOP_OUTPUT_ROOT"

GA_FIELDS = {f.name for f in dataclasses.fields(GAConfig)} - {"target_class", "weights", "bounds"}

SCHEMA = {
    "output_dir": str,
    "ga": {
        "runs": int,
        "per_class_target": int,
        "population_size": int,
        "generations": int,
        "crossover_rate": float,
        "mutation_rate": float,
        "seed": int,
        "weights": dict,
        "validity_bonus": float,
        "tournament_size": int,
        "elite_fraction": float,
        "max_statements": int,
        "max_depth": int,
        "max_arrays": int,
        "max_scalars": int,
        "max_locals": int,
        "bounds": list,
        "oracle_seed": int,
        "inits_per_bound": int,
    },
    "ga_class_overrides": {"0": dict, "1": dict},
    "corpus": {"real_dir": (str, type(None)), "balance": bool, "per_class_cap": (int, type(None))},
    "tokenizer": {"vocab_size": int, "max_len": int},
    "model": {
        "num_layers": int, "num_heads": int, "d_model": int, "d_ff": int,
        "dropout": float, "num_labels": int, "seed": int, "dtype": str,
    },
    "training": {
        "epochs": int, "batch_size": int, "learning_rate": float, "warmup_fraction": float,
        "weight_decay": float, "patience": int, "beta1": float, "beta2": float, "eps": float,
        "max_grad_norm": float, "seed": int,
    },
    "evaluation": {"k": int, "seed": int, "test_fraction": float, "val_fraction": float, "save_checkpoints": bool},
}


# -------------------------------------------------------------------- config


def _check(node, schema, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path or 'config'} must be an object", path)
        for key, sub in schema.items():
            where = f"{path}.{key}" if path else key
            if key not in node:
                raise ConfigError(f"missing config field {where}", where)
            _check(node[key], sub, where)
        extra = sorted(set(node) - set(schema))
        if extra and schema is not SCHEMA["ga_class_overrides"]:
            where = f"{path}.{extra[0]}" if path else extra[0]
            raise ConfigError(f"unknown config field {where}", where)
        return
    types = schema if isinstance(schema, tuple) else (schema,)
    if float in types and isinstance(node, int) and not isinstance(node, bool):
        return
    if isinstance(node, bool) and bool not in types:
        raise ConfigError(f"{path} has the wrong type", path)
    if not isinstance(node, types):
        raise ConfigError(f"{path} must be {' or '.join(t.__name__ for t in types)}", path)


def validate_config(cfg: dict) -> dict:
    _check(cfg, SCHEMA, "")
    for cls, over in cfg["ga_class_overrides"].items():
        bad = sorted(set(over) - set(SCHEMA["ga"]))
        if bad:
            raise ConfigError(f"unknown config field ga_class_overrides.{cls}.{bad[0]}", f"ga_class_overrides.{cls}.{bad[0]}")
    # construct every typed section once so value errors surface as config errors
    for label in (0, 1):
        ga_config(cfg, label)
    model_config(cfg, 10)
    hyperparameters(cfg)
    if cfg["tokenizer"]["max_len"] < 2:
        raise ConfigError("tokenizer.max_len must be at least 2", "tokenizer.max_len")
    if cfg["evaluation"]["k"] < 2:
        raise ConfigError("evaluation.k must be at least 2", "evaluation.k")
    return cfg


def _section_error(section: str, exc: Exception) -> ConfigError:
    field = getattr(exc, "field", None)
    path = f"{section}.{field}" if field else section
    return ConfigError(f"invalid {section} settings: {exc}", path)


def ga_config(cfg: dict, label: int) -> GAConfig:
    d = {**cfg["ga"], **cfg["ga_class_overrides"].get(str(label), {})}
    d = {k: v for k, v in d.items() if k in GA_FIELDS or k in ("weights", "bounds")}
    try:
        return GAConfig(target_class=label, **{**d, "bounds": tuple(d["bounds"])})
    except (TypeError, ValueError) as exc:
        raise _section_error("ga", exc) from exc


def model_config(cfg: dict, vocab_size: int) -> ModelConfig:
    try:
        return ModelConfig(vocab_size=vocab_size, max_len=cfg["tokenizer"]["max_len"], **cfg["model"])
    except (TypeError, ValueError) as exc:
        raise _section_error("model", exc) from exc


def hyperparameters(cfg: dict, fold: int = 0) -> Hyperparameters:
    try:
        h = Hyperparameters(**cfg["training"])
    except (ConfigError, TypeError, ValueError) as exc:
        raise _section_error("training", exc) from exc
    h.seed = h.seed + fold
    return h


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", None) from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}", None) from exc
    return cfg


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``section.key=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value", assignment)
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config field {key}", key)
        node = node[p]
    if parts[-1] not in node and parts[0] != "ga_class_overrides":
        raise ConfigError(f"unknown config field {key}", key)
    node[parts[-1]] = value
    return cfg


def config_hash(cfg: dict) -> str:
    """Digest of every setting that influences results (the output location does not)."""
    d = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def run_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _stamp(directory: Path, h: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config_hash.txt").write_text(h + "\n", encoding="utf-8")


def _check_stamp(directory: Path, h: str, stage: str) -> None:
    stamp = directory / "config_hash.txt"
    if not stamp.exists():
        raise DataError(f"{directory} is missing; run the {stage} stage first")
    found = stamp.read_text(encoding="utf-8").strip()
    if found != h:
        raise DataError(f"{directory} was produced by config {found}, current config is {h}; rerun {stage}")


# -------------------------------------------------------------------- stages


def generate_class(cfg: dict, label: int) -> list[corpus_mod.LoopSample]:
    """Chain GA runs with derived seeds until ``per_class_target`` unique samples exist or runs are spent."""
    base = ga_config(cfg, label)
    target = cfg["ga"]["per_class_target"]
    found: dict[str, corpus_mod.LoopSample] = {}
    for r in range(cfg["ga"]["runs"]):
        run_cfg = dataclasses.replace(base, seed=base.seed + 1000 * r)
        for s in evolve(run_cfg):
            found.setdefault(s.id, s)
        log.info("class %d: run %d -> %d unique samples", label, r, len(found))
        if len(found) >= target:
            break
    return list(found.values())


def stage_generate(cfg: dict) -> dict[int, list]:
    h, out = config_hash(cfg), run_dir(cfg) / "generated"
    result = {}
    for label in (0, 1):
        samples = generate_class(cfg, label)
        corpus_mod.save_samples(samples, out / f"class{label}.jsonl")
        result[label] = samples
    _stamp(out, h)
    return result


def stage_ingest(cfg: dict, directory=None) -> list:
    directory = directory or cfg["corpus"]["real_dir"]
    out = run_dir(cfg) / "real"
    samples = corpus_mod.ingest_real(directory) if directory else []
    corpus_mod.save_samples(samples, out / "samples.jsonl")
    _stamp(out, config_hash(cfg))
    return samples


def stage_assemble(cfg: dict) -> corpus_mod.Corpus:
    h, root = config_hash(cfg), run_dir(cfg)
    _check_stamp(root / "generated", h, "generate")
    synthetic = []
    for label in (0, 1):
        synthetic += corpus_mod.load_samples(root / "generated" / f"class{label}.jsonl")
    real = []
    real_file = root / "real" / "samples.jsonl"
    if cfg["corpus"]["real_dir"]:
        _check_stamp(root / "real", h, "ingest")
        real = corpus_mod.load_samples(real_file)
    c = corpus_mod.assemble(synthetic, real, cfg["corpus"]["balance"], cfg["corpus"]["per_class_cap"], h)
    corpus_mod.save(c, root / "corpus" / "corpus.jsonl")
    _stamp(root / "corpus", h)
    return c


def stage_tokenize(cfg: dict):
    h, root = config_hash(cfg), run_dir(cfg)
    _check_stamp(root / "corpus", h, "assemble")
    c = corpus_mod.load(root / "corpus" / "corpus.jsonl")
    texts = [s.source_text for s in c.samples]
    vocab = train_vocab(texts, cfg["tokenizer"]["vocab_size"])
    ids, mask = encode_batch(texts, vocab, cfg["tokenizer"]["max_len"])
    out = root / "tokenizer"
    out.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out / "vocab.txt")
    labels = np.array(c.labels, dtype=np.int64)
    with open(out / "encoded.npz", "wb") as fh:
        np.savez(fh, ids=ids, mask=mask, labels=labels)
    _stamp(out, h)
    return vocab, Dataset(ids, mask, labels)


def load_encoded(cfg: dict) -> tuple[int, Dataset]:
    h, out = config_hash(cfg), run_dir(cfg) / "tokenizer"
    _check_stamp(out, h, "tokenize")
    vocab = load_vocab(out / "vocab.txt")
    with np.load(out / "encoded.npz") as z:
        data = Dataset(z["ids"], z["mask"], z["labels"])
    return len(vocab), data


def splits(cfg: dict, labels) -> list:
    ev = cfg["evaluation"]
    return kfold_split(labels, ev["k"], ev["seed"], ev["test_fraction"], ev["val_fraction"])


def run_fold(cfg: dict, fold: int, vocab_size: int | None = None, data: Dataset | None = None) -> FoldReport:
    """Train and evaluate one fold from scratch; writes ``folds/fold_<k>/``."""
    if data is None:
        vocab_size, data = load_encoded(cfg)
    split = splits(cfg, data.labels)[fold]
    mcfg = model_config(cfg, vocab_size)
    mcfg.seed = mcfg.seed + fold
    hyper = hyperparameters(cfg, fold)
    train_set, val_set, test_set = (data.subset(list(ix)) for ix in (split.train, split.val, split.test))
    t0 = time.perf_counter()
    ckpt, history = train(train_set, val_set, mcfg, hyper)
    test_pred = predict(ckpt.weights, mcfg, test_set)
    _, train_acc = evaluate(ckpt.weights, mcfg, train_set)
    out = run_dir(cfg) / "folds" / f"fold_{fold}"
    out.mkdir(parents=True, exist_ok=True)
    ckpt_name = None
    if cfg["evaluation"]["save_checkpoints"]:
        save_checkpoint(ckpt, out / "checkpoint.bin")
        ckpt_name = "checkpoint.bin"
    report = FoldReport(
        fold=fold,
        history=history,
        confusion=confusion(test_pred, test_set.labels),
        train_acc=train_acc,
        val_acc=ckpt.val_acc,
        test_acc=float((test_pred == test_set.labels).mean()),
        val_loss=ckpt.val_loss,
        checkpoint=ckpt_name,
        best_epoch=ckpt.epoch,
    )
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "history.csv").write_text(history.to_csv(), encoding="utf-8")
    (out / "split.json").write_text(json.dumps(split.to_json()) + "\n", encoding="utf-8")
    _stamp(out, config_hash(cfg))
    log.info("fold %d: test_acc=%.4f fpr=%.4f val_loss=%.4f (%.0fs)", fold, report.test_acc,
             report.metrics.fpr, report.val_loss, time.perf_counter() - t0)
    return report


def _fold_worker(args):
    cfg, fold = args
    return run_fold(cfg, fold)


def stage_folds(cfg: dict, jobs: int = 1, folds=None) -> list[FoldReport]:
    vocab_size, data = load_encoded(cfg)
    folds = list(range(cfg["evaluation"]["k"])) if folds is None else list(folds)
    if jobs <= 1:
        return [run_fold(cfg, f, vocab_size, data) for f in folds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_fold_worker, [(cfg, f) for f in folds]))


def stage_report(cfg: dict) -> dict:
    h, root = config_hash(cfg), run_dir(cfg)
    reports = []
    for f in range(cfg["evaluation"]["k"]):
        d = root / "folds" / f"fold_{f}"
        _check_stamp(d, h, "train")
        reports.append(FoldReport.from_json(json.loads((d / "report.json").read_text(encoding="utf-8"))))
    chosen = emit_report(reports, root / "report", h)
    return {k: v.fold for k, v in chosen.items()}


def crossval(cfg: dict, jobs: int = 1) -> dict:
    """The whole pipeline: generate, ingest, assemble, tokenize, every fold, report."""
    stage_generate(cfg)
    if cfg["corpus"]["real_dir"]:
        stage_ingest(cfg)
    stage_assemble(cfg)
    stage_tokenize(cfg)
    stage_folds(cfg, jobs)
    return stage_report(cfg)


def label_sources(paths, bounds=(4, 8, 16), inits_per_bound: int = 3, seed: int = 0) -> list[dict]:
    """Oracle labels with evidence for loop sources (subset C or loop JSON)."""
    out = []
    for p in paths:
        text = Path(p).read_text(encoding="utf-8")
        try:
            loop = loop_from_json(json.loads(text)) if text.lstrip().startswith("{") else parse_source(text)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{p}: not a loop in JSON form: {exc}") from exc
        v = validate(loop, bounds)
        if not v:
            raise DataError(f"{p}: {v.message}")
        entry = {"file": str(p)}
        entry.update(analyze(loop, bounds, inits_per_bound, seed).to_json())
        out.append(entry)
    return out


def default_config() -> dict:
    """Desk-scale configuration with every field spelled out."""
    return copy.deepcopy(DESK_CONFIG)


DESK_CONFIG = {
    "output_dir": "runs/desk",
    "ga": {
        "runs": 8,
        "per_class_target": 560,
        "population_size": 200,
        "generations": 10,
        "crossover_rate": 0.9,
        "mutation_rate": 0.1,
        "seed": 42,
        "weights": {"functions": 1.0, "conditionals": 1.0, "variables": 1.0, "loops": 1.0},
        "validity_bonus": 1.0,
        "tournament_size": 3,
        "elite_fraction": 0.01,
        "max_statements": 6,
        "max_depth": 3,
        "max_arrays": 4,
        "max_scalars": 2,
        "max_locals": 2,
        "bounds": [4, 8, 16],
        "oracle_seed": 0,
        "inits_per_bound": 3,
    },
    "ga_class_overrides": {"0": {}, "1": {}},
    "corpus": {"real_dir": None, "balance": True, "per_class_cap": 500},
    "tokenizer": {"vocab_size": 1024, "max_len": 512},
    "model": {
        "num_layers": 4, "num_heads": 8, "d_model": 256, "d_ff": 1024,
        "dropout": 0.1, "num_labels": 2, "seed": 0, "dtype": "float32",
    },
    "training": {
        "epochs": 5, "batch_size": 16, "learning_rate": 3e-4, "warmup_fraction": 0.1,
        "weight_decay": 0.01, "patience": 50, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
        "max_grad_norm": 1.0, "seed": 0,
    },
    "evaluation": {"k": 10, "seed": 0, "test_fraction": 0.2, "val_fraction": 0.2, "save_checkpoints": True},
}
