"""Cross-validation protocol, metrics, statistics and report emission."""
from .metrics import ConfusionMatrix, MetricSet, class_report, confusion, format_class_report, metrics
from .report import FoldReport, emit_report, select_models
from .splits import FoldSplit, check_split, kfold_split
from .stats import SummaryStats, boxplot_data, histogram_data, summarize, t_quantile
