"""One check per acceptance criterion; each appends a PASS/FAIL line to the summary."""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_net
from test_nn import kink_free_sample, max_rel_err, numeric_grads
from test_relevance import brute_force_lrp
from test_serialize import random_qmodel
from xaicompress.compress import (apply_prune, make_plan, model_size_bytes, prune_mask,
                                  quantize_group)
from xaicompress.errors import FormatError
from xaicompress.nn import backward_grads, forward, init_net
from xaicompress.pipeline import (PipelineConfig, prepare, repro, run_comparison, run_pipeline)
from xaicompress.relevance import ImportanceScores, lrp_attribute, lrp_batch, conservation_check
from xaicompress.serialize import deserialize_model, serialize_model

MPQ_ALL = ((8, 16), (8, 16), (8, 16))
MPQ_LAST48 = ((8, 16), (8, 16), (4, 8))


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def two_repro_runs(tmp_path_factory):
    """Two independent end-to-end runs from scratch, timed in CPU seconds."""
    dirs, cpu = [], []
    for i in range(2):
        out = tmp_path_factory.mktemp(f"repro{i}")
        t0 = time.process_time()
        repro(PipelineConfig(), out)
        cpu.append(time.process_time() - t0)
        dirs.append(out)
    return dirs, cpu


def test_criterion_1_size_ladder(default_context, two_repro_runs):
    cfg = PipelineConfig()
    orig, _, _ = run_pipeline(cfg, "original", default_context)
    pruned, _, _ = run_pipeline(cfg, "prune", default_context)
    mpq, _, _ = run_pipeline(cfg, "prune_mpq", default_context, bit_pairs=MPQ_ALL)
    mpq48, _, _ = run_pipeline(cfg, "prune_mpq", default_context, bit_pairs=MPQ_LAST48)
    fresh = model_size_bytes(init_net(cfg.dims, 0)).total
    r_p, r_m, r_48 = (row.size_bytes / orig.size_bytes for row in (pruned, mpq, mpq48))
    runtime = max(two_repro_runs[1])
    ok = (orig.size_bytes == fresh == 8_036_016 and 0.38 <= r_p <= 0.46
          and 0.13 <= r_m <= 0.18 and 0.10 <= r_48 <= 0.14 and runtime < 300)
    record(1, "size ladder", ok,
           f"original={orig.size_bytes} B, prune ratio={r_p:.4f} [0.38,0.46], "
           f"mpq(8,16)x3 ratio={r_m:.4f} [0.13,0.18], mpq(...,(4,8)) ratio={r_48:.4f} [0.10,0.14], "
           f"end-to-end CPU={runtime:.1f}s (<300)")


def test_criterion_2_accuracy_ladder(seed_contexts):
    acc = {"original": [], "prune": [], "mpq": [], "mpq48": [], "spq16": []}
    for ctx in seed_contexts:
        cfg = ctx.cfg
        acc["original"].append(run_pipeline(cfg, "original", ctx)[0].accuracy)
        acc["prune"].append(run_pipeline(cfg, "prune", ctx)[0].accuracy)
        acc["mpq"].append(run_pipeline(cfg, "prune_mpq", ctx, bit_pairs=MPQ_ALL)[0].accuracy)
        acc["mpq48"].append(run_pipeline(cfg, "prune_mpq", ctx, bit_pairs=MPQ_LAST48)[0].accuracy)
        acc["spq16"].append(run_pipeline(cfg, "prune_spq", ctx, spq_bits=16)[0].accuracy)
    m = {k: float(np.mean(v)) for k, v in acc.items()}
    d_prune = 100 * (m["original"] - m["prune"])
    d_mpq = 100 * (m["prune"] - min(m["mpq"], m["mpq48"]))
    d_spq = 100 * (m["prune"] - m["spq16"])
    ok = m["original"] >= 0.93 and d_prune <= 4 and d_mpq <= 1.5 and d_spq <= 0.5
    record(2, "accuracy ladder (3 seeds)", ok,
           f"original={m['original']:.4f} (>=0.93), prune drop={d_prune:.2f}pt (<=4), "
           f"mpq drop vs prune={d_mpq:.2f}pt (<=1.5), spq16 drop vs prune={d_spq:.2f}pt (<=0.5)")


def test_criterion_3_criterion_ordering(seed_contexts):
    acc = {"lrp": [], "taylor": [], "magnitude": []}
    for ctx in seed_contexts:
        report = run_comparison(ctx.cfg, list(acc), ctx, runs=(("prune", {}),))
        sizes = {r.size_bytes for r in report.rows}
        assert len(sizes) == 1, "comparison sizes are not matched"
        for row in report.rows:
            acc[row.criterion].append(row.accuracy)
    m = {k: float(np.mean(v)) for k, v in acc.items()}
    gap = 100 * (m["lrp"] - m["magnitude"])
    ok = m["lrp"] >= m["taylor"] >= m["magnitude"] and gap >= 3
    record(3, "criterion ordering (3 seeds, matched size)", ok,
           f"lrp={m['lrp']:.4f}, taylor={m['taylor']:.4f}, magnitude={m['magnitude']:.4f}; "
           f"need lrp>=taylor>=magnitude and lrp-magnitude={gap:.2f}pt >= 3")


def test_criterion_4_conservation(default_context):
    rng = np.random.default_rng(4)
    worst_random = 0.0
    for i in range(100):
        dims = [int(rng.integers(1, 6))] + [int(rng.integers(2, 12)) for _ in range(3)] + [int(rng.integers(2, 5))]
        net = random_net(dims, 1000 + i)
        x = rng.standard_normal(dims[0])
        trace = forward(net, x)
        target = int(np.argmax(trace.logits))
        worst_random = max(worst_random, conservation_check(lrp_attribute(net, trace, target, 1e-9)))

    ctx = default_context
    x, y = ctx.scoring.features, ctx.scoring.labels
    trace = forward(ctx.net, x)
    rel = lrp_batch(ctx.net, trace, y, 1e-9, ctx.cfg.bias_rule)
    start = trace.logits[np.arange(len(y)), y]
    dev = max(float(np.max(np.abs(r.sum(axis=1) - start) / np.maximum(np.abs(start), 1e-12)))
              for r in rel)

    worst_oracle = 0.0
    for i in range(40):
        dims = [int(rng.integers(1, 4)), int(rng.integers(2, 7)), int(rng.integers(2, 7)),
                int(rng.integers(2, 5))]
        assert sum(dims) <= 20
        net = random_net(dims, 2000 + i, bias_scale=0.3 * (i % 2))
        x = rng.standard_normal(dims[0])
        trace = forward(net, x)
        target = int(rng.integers(dims[-1]))
        for rule in ("absorb", "drop"):
            got = lrp_attribute(net, trace, target, 1e-9, rule).relevances
            want = brute_force_lrp(net, x, target, 1e-9, rule)
            scale = max(abs(trace.logits[target]), 1e-300)
            for g, w in zip(got, want):
                worst_oracle = max(worst_oracle, float(np.max(np.abs(g - w))) / scale)
    ok = worst_random <= 1e-6 and dev <= 1e-3 and worst_oracle <= 1e-12
    record(4, "LRP conservation", ok,
           f"random zero-bias nets max rel dev={worst_random:.2e} (<=1e-6), trained model "
           f"max rel dev={dev:.2e} over {len(y)} samples (<=1e-3), oracle max rel diff="
           f"{worst_oracle:.2e} (<=1e-12)")


def test_criterion_5_gradients():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(20):
        dims = [int(rng.integers(1, 4)), int(rng.integers(2, 6)), int(rng.integers(2, 6)),
                int(rng.integers(2, 4))]
        net = random_net(dims, 3000 + i, bias_scale=0.2)
        x = kink_free_sample(net, rng)
        label = int(rng.integers(dims[-1]))
        g = backward_grads(net, x, label)
        fw, fb = numeric_grads(net, x, label)
        for a, b in zip(g.weights + g.biases, fw + fb):
            worst = max(worst, max_rel_err(a, b))
    record(5, "gradient correctness", worst <= 1e-4,
           f"max relative error vs central differences over 20 nets={worst:.2e} (<=1e-4)")


def test_criterion_6_quantization_bounds():
    rng = np.random.default_rng(6)
    bad = 0
    for i in range(10_000):
        bits = (4, 8, 16)[i % 3]
        w = rng.standard_normal(int(rng.integers(1, 64))) * 10.0 ** rng.uniform(-4, 3)
        codes, scale = quantize_group(w, bits)
        qmax = 2 ** (bits - 1) - 1
        if np.abs(codes).max() > qmax or np.abs(codes * scale - w).max() > scale / 2:
            bad += 1
    zero_ok = all(quantize_group(np.zeros(5), b)[1] == 1.0
                  and not quantize_group(np.zeros(5), b)[0].any() for b in (4, 8, 16))
    record(6, "quantization bounds", bad == 0 and zero_ok,
           f"violations in 10000 groups={bad}, zero-group convention exact={zero_ok}")


def test_criterion_7_algorithm_semantics():
    rng = np.random.default_rng(7)
    failures = []
    for trial in range(500):
        s = rng.standard_normal(int(rng.integers(2, 50)))
        if not (s > 0).any():
            continue
        scores = ImportanceScores("lrp", [s])
        if not np.array_equal(prune_mask(scores)[0], s > 0):
            failures.append("mask")
        plan = make_plan(scores, [(4, 8)])
        kept = s[s > 0]
        if not np.array_equal(plan.assignments[0], kept > np.median(kept)):
            failures.append("assignment")
        c = float(rng.uniform(1e-3, 1e3)) if trial % 2 else 2.0 ** int(rng.integers(-30, 30))
        scaled = make_plan(scores.scaled(c), [(4, 8)])
        if not (np.array_equal(plan.masks[0], scaled.masks[0])
                and np.array_equal(plan.assignments[0], scaled.assignments[0])):
            failures.append("rescale")
    for seed in range(20):
        net = random_net([3, 10, 8, 4], seed, bias_scale=0.2)
        dead = [rng.random(10) < 0.3, rng.random(8) < 0.3]
        net.layers[1].weights[dead[0], :] = 0.0
        net.layers[2].weights[dead[1], :] = 0.0
        pruned = apply_prune(net, [~d for d in dead])
        x = rng.standard_normal((1000, 3))
        if not np.array_equal(forward(net, x).logits, forward(pruned, x).logits):
            failures.append("zero-outgoing")
    record(7, "pruning/assignment semantics", not failures,
           f"failed properties: {sorted(set(failures)) or 'none'}")


def test_criterion_8_serialization():
    rng = np.random.default_rng(8)
    mismatches = crashes = rejected = 0
    for i in range(1000):
        blob = serialize_model(random_qmodel(10_000 + i))
        if serialize_model(deserialize_model(blob)) != blob:
            mismatches += 1
        mutated = bytearray(blob)
        mutated[int(rng.integers(len(blob)))] ^= int(rng.integers(1, 256))
        try:
            model = deserialize_model(bytes(mutated))
            if serialize_model(model) != bytes(mutated):
                mismatches += 1
        except FormatError:
            rejected += 1
        except Exception:  # anything else counts as a crash
            crashes += 1
    record(8, "serialization", mismatches == 0 and crashes == 0,
           f"1000 round trips + 1000 mutations: mismatches={mismatches}, crashes={crashes}, "
           f"cleanly rejected mutations={rejected}")


def test_criterion_9_determinism(two_repro_runs):
    (a, b), _ = two_repro_runs
    names = sorted(p.relative_to(a).as_posix() for p in a.rglob("*") if p.is_file()
                   and p.name != "timings.json")
    other = sorted(p.relative_to(b).as_posix() for p in b.rglob("*") if p.is_file()
                   and p.name != "timings.json")
    differing = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    ok = names == other and not differing and "report.csv" in names
    record(9, "determinism", ok,
           f"{len(names)} report/model files compared, differing={differing or 'none'}")
