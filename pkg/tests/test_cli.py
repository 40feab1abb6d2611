import json

import pytest

from parloop import cli, pipeline

SMALL = [
    "ga.runs=2", "ga.per_class_target=40", "ga.population_size=40", "ga.generations=2",
    "corpus.per_class_cap=40", "tokenizer.vocab_size=300", "tokenizer.max_len=128",
    "model.num_layers=1", "model.num_heads=2", "model.d_model=16", "model.d_ff=32",
    "training.epochs=2", "training.learning_rate=0.001", "evaluation.k=3",
]


def small_args(out):
    args = ["-o", str(out)]
    for s in SMALL:
        args += ["--set", s]
    return args


def run_json(capsys, argv):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err.splitlines()[-1]) if err.strip() else None)


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """One run built stage by stage and one built in a single call."""
    root = tmp_path_factory.mktemp("runs")
    a, b = root / "staged", root / "oneshot"
    for stage in ("generate", "assemble", "tokenize"):
        assert cli.run([stage, *small_args(a)]) == 0
    for fold in range(3):
        assert cli.run(["train", "--fold", str(fold), *small_args(a)]) == 0
    assert cli.run(["report", *small_args(a)]) == 0
    assert cli.run(["crossval", *small_args(b)]) == 0
    return a, b


def test_stages_compose_to_crossval(staged):
    a, b = staged
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_report_bundle(staged):
    out = staged[0] / "report"
    for name in ("summary_accuracy.csv", "summary_prf.csv", "summary_valloss.csv", "summary_fpr.csv",
                 "tables.txt", "folds.csv", "selection.json"):
        assert (out / name).exists(), name
    h = (staged[0] / "corpus" / "config_hash.txt").read_text()
    assert (out / "config_hash.txt").read_text() == h
    for fold in range(3):
        assert (staged[0] / "folds" / f"fold_{fold}" / "checkpoint.bin").exists()


def test_show_config(capsys, tmp_path):
    code, cfg, _ = run_json(capsys, ["show-config", *small_args(tmp_path), "--seed", "5"])
    assert code == 0 and cfg["ga"]["seed"] == 47 and cfg["evaluation"]["k"] == 3
    assert cfg["output_dir"] == str(tmp_path)


def test_config_file(capsys, tmp_path):
    cfg = pipeline.default_config()
    cfg["training"]["epochs"] = 7
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, shown, _ = run_json(capsys, ["show-config", "-c", str(path)])
    assert code == 0 and shown["training"]["epochs"] == 7


@pytest.mark.parametrize("setting,field", [
    ("training.bogus=1", "training.bogus"),
    ("training.epochs=0", "training.epochs"),
    ("model.d_model=250", "model"),
])
def test_config_errors(capsys, tmp_path, setting, field):
    code, _, err = run_json(capsys, ["show-config", "-o", str(tmp_path), "--set", setting])
    assert code == 2 and err["exit_code"] == 2 and err["field"].startswith(field)


def test_missing_field(capsys, tmp_path):
    cfg = pipeline.default_config()
    del cfg["tokenizer"]["max_len"]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run_json(capsys, ["show-config", "-c", str(path)])
    assert code == 2 and err["field"] == "tokenizer.max_len"


def test_missing_stage(capsys, tmp_path):
    code, _, err = run_json(capsys, ["tokenize", *small_args(tmp_path / "empty")])
    assert code == 3 and err["error"] == "DataError" and "assemble" in err["message"]


def test_stale_stage(capsys, staged, tmp_path):
    # a different vocabulary size invalidates the tokenizer output
    code, _, err = run_json(capsys, ["train", *small_args(staged[0]), "--set", "tokenizer.vocab_size=301"])
    assert code == 3 and "tokenize" in err["message"]


def test_divergence_exit_code(capsys, tmp_path):
    code, _, err = run_json(capsys, ["crossval", *small_args(tmp_path), "--set", "training.learning_rate=1e6",
                                     "--set", "training.max_grad_norm=0", "--set", "training.warmup_fraction=0"])
    assert code == 4 and err["error"] == "DivergenceError"


def test_label(capsys, tmp_path):
    src = tmp_path / "k.c"
    src.write_text("void kernel(int n, int a[n], int b[n]) {\n    for (int i = 0; i < n; i++) {\n"
                   "        a[i] = b[i] + 1;\n    }\n}\n")
    code, out, _ = run_json(capsys, ["label", str(src)])
    assert code == 0 and out[0]["label"] == 1 and out[0]["label_name"] == "Parallelizable"


def test_label_bad_bounds(capsys, tmp_path):
    code, _, err = run_json(capsys, ["label", "--bounds", "4,x", str(tmp_path / "none.c")])
    assert code == 2 and err["field"] == "bounds"


def test_label_json(capsys, tmp_path):
    from parloop.loop_model import to_json
    from parloop.parse import parse_source

    nest = parse_source("void kernel(int n, int a[n]) {\n    for (int i = 1; i < n; i++) {\n"
                        "        a[i] = a[i - 1];\n    }\n}\n")
    path = tmp_path / "k.json"
    path.write_text(json.dumps(to_json(nest)))
    code, out, _ = run_json(capsys, ["label", str(path)])
    assert code == 0 and out[0]["label"] == 0 and out[0]["conflicts"][0]["kind"] == "flow"
