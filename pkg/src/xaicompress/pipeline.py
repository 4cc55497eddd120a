"""Experiment orchestration: the size/accuracy ladder and criterion comparisons."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .compress import (CompressionPlan, apply_prune, dequantize, make_plan, model_size_bytes,
                       quantize_model)
from .criteria import magnitude_scores, taylor_scores
from .datagen import Dataset, generate_multi, train_test_split
from .errors import InvalidArgumentError
from .nn import DenseNet, TrainConfig, evaluate, init_net, sgd_train
from .relevance import CRITERIA, BIAS_RULES, ImportanceScores, aggregate_neuron_scores
from .serialize import serialize_model

log = logging.getLogger(__name__)

METHODS = ("original", "prune", "prune_spq", "prune_mpq")
REPORT_FORMAT_VERSION = 1
CSV_COLUMNS = ("method", "criterion", "size_bytes", "accuracy", "layer_survivors", "tau_values")

# mixed-precision configurations run by repro, (low, high) per hidden layer
DEFAULT_MPQ_CONFIGS = (
    ((8, 16), (8, 16), (4, 8)),
    ((8, 16), (8, 16), (8, 16)),
)
DEFAULT_SPQ_BITS = (16, 8)


@dataclass
class PipelineConfig:
    n_samples: int = 4000
    k: int = 4
    cluster_offset: float = 2.5
    cluster_std: float = 1.0
    test_fraction: float = 0.25
    data_seed: int = 1
    split_seed: int = 2
    hidden: tuple[int, ...] = (1000, 1000, 1000)
    init_seed: int = 7
    learning_rate: float = 0.0015
    epochs: int = 3
    batch_size: int = 32
    train_seed: int = 7
    scoring_size: int = 1000
    epsilon: float = 1e-9
    bias_rule: str = "absorb"
    criterion: str = "lrp"
    bit_pairs: tuple[tuple[int, int], ...] = ((8, 16), (8, 16), (8, 16))
    spq_bits: int = 16

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.bit_pairs = tuple((int(lo), int(hi)) for lo, hi in self.bit_pairs)
        if self.criterion not in CRITERIA:
            raise InvalidArgumentError(f"unknown criterion {self.criterion!r}")
        if self.bias_rule not in BIAS_RULES:
            raise InvalidArgumentError(f"unknown bias rule {self.bias_rule!r}")
        if len(self.bit_pairs) != len(self.hidden):
            raise InvalidArgumentError("need one bit pair per hidden layer")
        for lo, hi in self.bit_pairs + ((self.spq_bits, self.spq_bits),):
            if not 2 <= lo <= hi <= 16:
                raise InvalidArgumentError(f"invalid bit pair ({lo}, {hi})")
        if self.scoring_size < 1:
            raise InvalidArgumentError("scoring_size must be positive")

    @property
    def dims(self) -> list[int]:
        return [2, *self.hidden, self.k]

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.train_seed)

    def reseeded(self, seed: int) -> PipelineConfig:
        """Same experiment with every seed derived from ``seed``."""
        return replace(self, data_seed=seed, split_seed=seed + 1, init_seed=seed + 2,
                       train_seed=seed + 3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["bit_pairs"] = [list(p) for p in self.bit_pairs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> PipelineConfig:
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ReportRow:
    method: str
    criterion: str
    size_bytes: int
    accuracy: float
    layer_survivors: tuple[int, ...] = ()
    tau_values: tuple[float, ...] = ()
    wall_clock: float = 0.0


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    format_version: int = REPORT_FORMAT_VERSION

    def find(self, method: str, criterion: str | None = None) -> ReportRow:
        for row in self.rows:
            if row.method == method and criterion in (None, row.criterion):
                return row
        raise KeyError((method, criterion))


@dataclass
class Context:
    """Everything shared by the runs of one configuration: data, trained net, scores."""

    cfg: PipelineConfig
    train: Dataset
    test: Dataset
    scoring: Dataset
    net: DenseNet
    loss_history: list[float]
    _scores: dict = field(default_factory=dict)

    def scores(self, criterion: str) -> ImportanceScores:
        if criterion not in self._scores:
            if criterion == "lrp":
                s = aggregate_neuron_scores(self.net, self.scoring, self.cfg.epsilon,
                                            self.cfg.bias_rule)
            elif criterion == "taylor":
                s = taylor_scores(self.net, self.scoring)
            elif criterion == "magnitude":
                s = magnitude_scores(self.net)
            else:
                raise InvalidArgumentError(f"unknown criterion {criterion!r}")
            self._scores[criterion] = s
        return self._scores[criterion]


def prepare(cfg: PipelineConfig, net: DenseNet | None = None) -> Context:
    """Generate and split the data, then train (unless ``net`` is given)."""
    data = generate_multi(cfg.n_samples, cfg.k, cfg.data_seed, cfg.cluster_offset, cfg.cluster_std)
    train, test = train_test_split(data, cfg.test_fraction, cfg.split_seed)
    scoring = train.subset(np.arange(min(cfg.scoring_size, len(train))))
    history = []
    if net is None:
        t0 = time.perf_counter()
        net, history = sgd_train(init_net(cfg.dims, cfg.init_seed), train, cfg.train_config)
        log.info("trained %s in %.1fs, loss %s", cfg.dims, time.perf_counter() - t0, history)
    return Context(cfg, train, test, scoring, net, history)


def method_label(method: str, bit_pairs=None, spq_bits=None) -> str:
    if method == "prune_spq":
        return f"prune_spq{spq_bits}"
    if method == "prune_mpq":
        return "prune_mpq[" + ",".join(f"{lo}-{hi}" for lo, hi in bit_pairs) + "]"
    return method


def run_pipeline(cfg: PipelineConfig, method: str, context: Context | None = None,
                 keep_counts=None, bit_pairs=None, spq_bits=None):
    """Run one method on the shared context; returns ``(ReportRow, model_bytes, model)``.

    ``keep_counts`` switches pruning from the ``score > 0`` rule to keeping the
    top-scored neurons per layer (used for matched-size comparisons).
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    ctx = context if context is not None else prepare(cfg)
    t0 = time.perf_counter()
    bit_pairs = tuple(bit_pairs) if bit_pairs is not None else cfg.bit_pairs
    spq_bits = spq_bits if spq_bits is not None else cfg.spq_bits
    if method == "original":
        model = ctx.net
        acc = evaluate(model, ctx.test)
        survivors, taus = tuple(ctx.net.hidden_widths), ()
    else:
        scores = ctx.scores(cfg.criterion)
        if method == "prune_spq":
            pairs = tuple((spq_bits, spq_bits) for _ in cfg.hidden)
        else:
            pairs = bit_pairs
        plan: CompressionPlan = make_plan(scores, pairs, keep_counts)
        pruned = apply_prune(ctx.net, plan.masks)
        survivors = tuple(plan.survivors())
        if method == "prune":
            model = pruned
            taus = ()
            acc = evaluate(pruned, ctx.test)
        else:
            model = quantize_model(pruned, plan)
            taus = tuple(plan.taus)
            acc = evaluate(dequantize(model), ctx.test)
    blob = serialize_model(model)
    row = ReportRow(method_label(method, bit_pairs, spq_bits), cfg.criterion,
                    model_size_bytes(model).total, acc, survivors, taus,
                    time.perf_counter() - t0)
    return row, blob, model


def lrp_keep_counts(ctx: Context) -> list[int]:
    """Per-layer survivor counts of the LRP ``score > 0`` rule."""
    return [int((s > 0).sum()) for s in ctx.scores("lrp").scores]


COMPARISON_RUNS = (
    ("prune", {}),
    ("prune_spq", {"spq_bits": 8}),
    ("prune_mpq", {"bit_pairs": ((8, 16), (8, 16), (8, 16))}),
)


def run_comparison(cfg: PipelineConfig, criteria, context: Context | None = None,
                   runs=COMPARISON_RUNS, models: dict | None = None) -> ExperimentReport:
    """Same trained net and scoring set for every criterion, pruned to LRP's survivor counts."""
    criteria = list(criteria)
    if not criteria:
        raise InvalidArgumentError("need at least one criterion")
    for c in criteria:
        if c not in CRITERIA:
            raise InvalidArgumentError(f"unknown criterion {c!r}")
    ctx = context if context is not None else prepare(cfg)
    counts = lrp_keep_counts(ctx)
    report = ExperimentReport()
    for criterion in criteria:
        ccfg = replace(cfg, criterion=criterion)
        for method, kw in runs:
            kw = dict(kw)
            if "bit_pairs" in kw and len(kw["bit_pairs"]) != len(cfg.hidden):
                kw["bit_pairs"] = tuple(kw["bit_pairs"][0] for _ in cfg.hidden)
            row, blob, _ = run_pipeline(ccfg, method, ctx, keep_counts=counts, **kw)
            report.rows.append(row)
            if models is not None:
                models[f"{criterion}_{row.method}"] = blob
    return report


def ladder_runs(cfg: PipelineConfig):
    n = len(cfg.hidden)
    runs = [("original", {}), ("prune", {})]
    runs += [("prune_spq", {"spq_bits": b}) for b in DEFAULT_SPQ_BITS]
    for pairs in DEFAULT_MPQ_CONFIGS:
        pairs = pairs if len(pairs) == n else tuple(pairs[-1] for _ in range(n))
        runs.append(("prune_mpq", {"bit_pairs": pairs}))
    return runs


def repro(cfg: PipelineConfig, out_dir=None, context: Context | None = None):
    """Size ladder plus criterion comparison for one configuration.  Writes report.csv/.md and model files."""
    ctx = context if context is not None else prepare(cfg)
    models: dict[str, bytes] = {}
    ladder = ExperimentReport()
    lcfg = replace(cfg, criterion="lrp")
    for method, kw in ladder_runs(cfg):
        row, blob, _ = run_pipeline(lcfg, method, ctx, **kw)
        ladder.rows.append(row)
        models[f"lrp_{row.method}"] = blob
    comparison = run_comparison(cfg, ["lrp", "taylor", "magnitude"], ctx, models=models)
    report = ExperimentReport(ladder.rows + [r for r in comparison.rows if r.criterion != "lrp"])
    if out_dir is not None:
        out = Path(out_dir)
        (out / "models").mkdir(parents=True, exist_ok=True)
        for name, blob in sorted(models.items()):
            ext = "xaic" if blob[:4] == b"XAIC" else "xaif"
            (out / "models" / f"{_safe(name)}.{ext}").write_bytes(blob)
        emit_report(report, out / "report.csv", "csv")
        emit_report(report, out / "report.md", "markdown")
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        # wall-clock varies run to run, so it stays out of the deterministic outputs
        timings = {f"{r.criterion}/{r.method}": r.wall_clock for r in report.rows}
        (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return report, models


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name).strip("_")


# --------------------------------------------------------------------------
# report emission

def report_to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow([r.method, r.criterion, r.size_bytes, repr(float(r.accuracy)),
                         ";".join(str(s) for s in r.layer_survivors),
                         ";".join(repr(float(t)) for t in r.tau_values)])
    return buf.getvalue()


def report_from_csv(text: str) -> ExperimentReport:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise InvalidArgumentError(f"report CSV header must be {','.join(CSV_COLUMNS)}")
    rows = []
    for d in reader:
        rows.append(ReportRow(
            d["method"], d["criterion"], int(d["size_bytes"]), float(d["accuracy"]),
            tuple(int(v) for v in d["layer_survivors"].split(";") if v),
            tuple(float(v) for v in d["tau_values"].split(";") if v),
        ))
    return ExperimentReport(rows)


def _mb(nbytes):
    return f"{nbytes / 1e6:.3f} MB"


def _pct(acc):
    return f"{100 * acc:.2f}%"


def _describe(method: str):
    """(pruning, quantization) columns of the size table for a method label."""
    if method == "original":
        return "-", "-"
    if method == "prune":
        return "yes", "-"
    if method.startswith("prune_spq"):
        return "yes", f"SP Q({method[len('prune_spq'):]} bits)"
    if method.startswith("prune_mpq["):
        pairs = method[len("prune_mpq["):-1].split(",")
        return "yes", "; ".join(f"Layer{i}: {p.replace('-', ',')} bits" for i, p in enumerate(pairs))
    return "?", "?"


def _gap_reduction(acc_new, acc_ref):
    err_ref = 1.0 - acc_ref
    return float("nan") if err_ref == 0 else (acc_new - acc_ref) / err_ref


def report_to_markdown(report: ExperimentReport) -> str:
    lines = [f"<!-- report format {report.format_version} -->", ""]
    lrp = [r for r in report.rows if r.criterion == "lrp"]
    original = next((r for r in lrp if r.method == "original"), None)

    lines += ["## Model size and accuracy (LRP criterion)", "",
              "| Method | Pruning | Quantization | Model Size | Size vs original | Accuracy |",
              "|---|---|---|---|---|---|"]
    for r in lrp:
        pruning, quant = _describe(r.method)
        ratio = f"{r.size_bytes / original.size_bytes:.3f}" if original else "-"
        lines.append(f"| {r.method} | {pruning} | {quant} | {_mb(r.size_bytes)} | {ratio} "
                     f"| {_pct(r.accuracy)} |")

    others = sorted({r.criterion for r in report.rows} - {"lrp"})
    compared = [r.method for r in report.rows if r.criterion in others]
    methods = list(dict.fromkeys(compared))
    if others:
        lines += ["", "## Criterion comparison at matched survivor counts", "",
                  "| Method | Model Size | " + " | ".join(others) + " | lrp |",
                  "|---|---|" + "---|" * (len(others) + 1)]
        for m in methods:
            cells = []
            for c in others + ["lrp"]:
                hit = [r for r in report.rows if r.method == m and r.criterion == c]
                cells.append(_pct(hit[0].accuracy) if hit else "-")
            size = next(r.size_bytes for r in report.rows if r.method == m)
            lines.append(f"| {m} | {_mb(size)} | " + " | ".join(cells) + " |")

    lines += ["", "## Figure data", "", "Accuracy and size per method (bar-chart series).", "",
              "| Criterion | Method | Accuracy | Size (bytes) |", "|---|---|---|---|"]
    for r in report.rows:
        lines.append(f"| {r.criterion} | {r.method} | {r.accuracy:.4f} | {r.size_bytes} |")

    if original is not None:
        lines += ["", "## Derived ratios", "",
                  "size_ratio = size / size(original); size_reduction = 1 - size_ratio; "
                  "error_gap_reduction(A vs B) = (acc_A - acc_B) / (1 - acc_B)", ""]
        for r in lrp:
            if r.method == "original":
                continue
            ratio = r.size_bytes / original.size_bytes
            lines.append(f"- {r.method}: size_ratio={ratio:.4f}, size_reduction={1 - ratio:.4f}")
        spq = [r for r in lrp if r.method.startswith("prune_spq")]
        mpq = [r for r in lrp if r.method.startswith("prune_mpq")]
        for a in mpq:
            for b in spq:
                lines.append(f"- error_gap_reduction({a.method} vs {b.method}) = "
                             f"{_gap_reduction(a.accuracy, b.accuracy):.4f}")
        for c in others:
            for m in methods:
                mine = [r for r in lrp if r.method == m]
                theirs = [r for r in report.rows if r.method == m and r.criterion == c]
                if mine and theirs:
                    lines.append(f"- error_gap_reduction(lrp {m} vs {c} {m}) = "
                                 f"{_gap_reduction(mine[0].accuracy, theirs[0].accuracy):.4f}")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path, fmt: str = "csv") -> Path:
    if not report.rows:
        raise InvalidArgumentError("report has no rows")
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "markdown":
        text = report_to_markdown(report)
    else:
        raise InvalidArgumentError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path
