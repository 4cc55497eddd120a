"""Command-line interface: ``xaicompress <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen
from .compress import (apply_prune, dequantize, make_plan, model_size_bytes, quantize_model)
from .criteria import magnitude_scores, taylor_scores
from .errors import InvalidArgumentError, XaiCompressError
from .nn import DenseNet, evaluate, init_net, sgd_train
from .pipeline import PipelineConfig, emit_report, repro, report_from_csv
from .relevance import aggregate_neuron_scores, read_scores_csv, write_scores_csv
from .serialize import deserialize_model, serialize_model

IO_EXIT = 6


def _bit_pair(text):
    try:
        lo, hi = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}") from None
    return lo, hi


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    for key in ("n_samples", "k", "hidden", "learning_rate", "epochs", "batch_size",
                "scoring_size", "epsilon", "bias_rule", "criterion", "bit_pairs", "spq_bits"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    cfg = replace(cfg, **overrides)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.reseeded(args.seed)
    return cfg


def _load(path):
    return deserialize_model(Path(path).read_bytes())


def _write(path, blob: bytes):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(blob)


def cmd_gen_data(args):
    cfg = _config(args)
    data = datagen.generate_multi(cfg.n_samples, cfg.k, cfg.data_seed, cfg.cluster_offset,
                                  cfg.cluster_std)
    train, test = datagen.train_test_split(data, cfg.test_fraction, cfg.split_seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, d in (("all", data), ("train", train), ("test", test)):
        datagen.write_csv(d, out / f"{name}.csv")
    print(json.dumps({"train": len(train), "test": len(test), "k": cfg.k}))


def cmd_train(args):
    cfg = _config(args)
    data = datagen.read_csv(args.data, cfg.k)
    net, history = sgd_train(init_net([data.features.shape[1], *cfg.hidden, cfg.k], cfg.init_seed),
                             data, cfg.train_config)
    _write(args.out, serialize_model(net))
    print(json.dumps({"loss_history": history}))


def _require_net(model, path) -> DenseNet:
    if not isinstance(model, DenseNet):
        raise InvalidArgumentError(f"{path} is not a full-precision network file")
    return model


def cmd_score(args):
    cfg = _config(args)
    net = _require_net(_load(args.net), args.net)
    if cfg.criterion == "magnitude":
        scores = magnitude_scores(net)
    else:
        data = datagen.read_csv(args.data, net.k)
        scoring = data.subset(slice(0, min(cfg.scoring_size, len(data))))
        if cfg.criterion == "lrp":
            scores = aggregate_neuron_scores(net, scoring, cfg.epsilon, cfg.bias_rule)
        else:
            scores = taylor_scores(net, scoring)
    write_scores_csv(scores, args.out)
    print(json.dumps({"criterion": scores.criterion,
                      "positive": [int((s > 0).sum()) for s in scores.scores]}))


def cmd_compress(args):
    cfg = _config(args)
    net = _require_net(_load(args.net), args.net)
    scores = read_scores_csv(args.scores)
    if args.method == "prune_spq":
        pairs = [(cfg.spq_bits, cfg.spq_bits)] * len(net.hidden_widths)
    else:
        pairs = list(cfg.bit_pairs)
    counts = args.keep_counts
    plan = make_plan(scores, pairs, counts)
    pruned = apply_prune(net, plan.masks)
    model = pruned if args.method == "prune" else quantize_model(pruned, plan)
    _write(args.out, serialize_model(model))
    print(json.dumps({"survivors": plan.survivors(), "taus": plan.taus,
                      "size_bytes": model_size_bytes(model).total}))


def cmd_eval(args):
    model = _load(args.model)
    net = model if isinstance(model, DenseNet) else dequantize(model)
    data = datagen.read_csv(args.data, net.k)
    size = model_size_bytes(model)
    print(json.dumps({"accuracy": evaluate(net, data), "size_bytes": size.total,
                      "breakdown": {"weights": size.weights, "scales": size.scales,
                                    "biases": size.biases, "bitwidths": size.bitwidths,
                                    "header": size.header}}))


def cmd_report(args):
    report = report_from_csv(Path(args.csv).read_text())
    emit_report(report, args.out, "markdown")


def cmd_repro(args):
    cfg = _config(args)
    report, _ = repro(cfg, args.out_dir)
    sys.stdout.write((Path(args.out_dir) / "report.md").read_text())


def _add_pipeline_flags(p):
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--seed", type=int, help="derive every seed from this value")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--scoring-size", dest="scoring_size", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--bias-rule", dest="bias_rule", choices=["absorb", "drop"])
    p.add_argument("--criterion", choices=["lrp", "taylor", "magnitude"])
    p.add_argument("--bits", dest="bit_pairs", type=_bit_pair, nargs="+", metavar="LOW,HIGH",
                   help="per hidden layer bit pair, e.g. --bits 8,16 8,16 4,8")
    p.add_argument("--spq-bits", dest="spq_bits", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="xaicompress", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write all/train/test CSVs")
    _add_pipeline_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a dense net on a CSV dataset")
    _add_pipeline_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="per-neuron importance scores to CSV")
    _add_pipeline_flags(p)
    p.add_argument("--net", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("compress", help="prune and optionally quantize a trained net")
    _add_pipeline_flags(p)
    p.add_argument("--net", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--method", choices=["prune", "prune_spq", "prune_mpq"], default="prune_mpq")
    p.add_argument("--keep-counts", dest="keep_counts", type=int, nargs="+",
                   help="keep the top-N neurons per layer instead of score > 0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval", help="accuracy and size of a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render a report CSV as markdown")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("repro", help="run the full size/accuracy/criterion suite")
    _add_pipeline_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except XaiCompressError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return IO_EXIT
    return 0
