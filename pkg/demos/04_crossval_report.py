"""The ten-fold protocol and its report bundle, at toy scale.

The same code path as ``parloop crossval``: every stage writes its
artifacts under one run directory, and the report stage turns the fold
results into summary tables with t-based confidence intervals.
"""
import sys
import tempfile
from pathlib import Path

from parloop import pipeline

cfg = pipeline.default_config()
cfg["output_dir"] = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="parloop-")
cfg["ga"].update(runs=2, per_class_target=60, population_size=60, generations=3)
cfg["corpus"]["per_class_cap"] = 60
cfg["tokenizer"].update(vocab_size=400, max_len=256)
cfg["model"].update(num_layers=1, num_heads=2, d_model=32, d_ff=64)
cfg["training"].update(epochs=8, learning_rate=3e-3)

selection = pipeline.crossval(cfg)
out = Path(pipeline.run_dir(cfg)) / "report"
print((out / "tables.txt").read_text())
print("selected folds:", selection)
print("bundle written to", out)
