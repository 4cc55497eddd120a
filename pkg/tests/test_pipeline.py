import json
from dataclasses import replace

import numpy as np
import pytest

from xaicompress.compress import model_size_bytes
from xaicompress.errors import DegenerateLayerError, InvalidArgumentError
from xaicompress.pipeline import (CSV_COLUMNS, ExperimentReport, PipelineConfig, ReportRow,
                                  emit_report, lrp_keep_counts, prepare, report_from_csv,
                                  report_to_csv, report_to_markdown, repro, run_comparison,
                                  run_pipeline)
from xaicompress.serialize import deserialize_model

SMALL = PipelineConfig(n_samples=600, hidden=(24, 24), bit_pairs=((4, 8), (4, 8)),
                       learning_rate=0.05, epochs=10, scoring_size=200)


@pytest.fixture(scope="module")
def ctx():
    return prepare(SMALL)


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.dims == [2, 1000, 1000, 1000, 4]
        assert cfg.bit_pairs == ((8, 16),) * 3

    def test_dict_round_trip(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(SMALL.to_dict()))
        assert PipelineConfig.load(path) == SMALL

    @pytest.mark.parametrize("kw", [{"criterion": "nope"}, {"bit_pairs": ((8, 4), (4, 8))},
                                    {"bit_pairs": ((4, 8),)}, {"scoring_size": 0},
                                    {"spq_bits": 17}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgumentError):
            replace(SMALL, **kw)

    def test_reseeded_changes_every_seed(self):
        a, b = SMALL.reseeded(0), SMALL.reseeded(1)
        for key in ("data_seed", "split_seed", "init_seed", "train_seed"):
            assert getattr(a, key) != getattr(b, key)


class TestRunPipeline:
    def test_rows(self, ctx):
        orig, blob, _ = run_pipeline(SMALL, "original", ctx)
        assert orig.size_bytes == 4 * ctx.net.parameter_count()
        assert orig.accuracy > 0.9
        pruned, _, _ = run_pipeline(SMALL, "prune", ctx)
        assert pruned.size_bytes < orig.size_bytes
        assert pruned.layer_survivors == tuple(lrp_keep_counts(ctx))
        mpq, blob, model = run_pipeline(SMALL, "prune_mpq", ctx)
        assert mpq.method == "prune_mpq[4-8,4-8]"
        assert len(mpq.tau_values) == 2
        assert mpq.size_bytes == len(blob) == model_size_bytes(deserialize_model(blob)).total
        spq, _, _ = run_pipeline(SMALL, "prune_spq", ctx, spq_bits=8)
        assert spq.method == "prune_spq8"
        assert 0 <= spq.accuracy <= 1

    def test_sizes_rederivable_from_artifacts(self, ctx):
        for method in ("original", "prune", "prune_spq", "prune_mpq"):
            row, blob, _ = run_pipeline(SMALL, method, ctx)
            assert model_size_bytes(deserialize_model(blob)).total == row.size_bytes

    def test_unknown_method(self, ctx):
        with pytest.raises(InvalidArgumentError):
            run_pipeline(SMALL, "distill", ctx)

    def test_deterministic(self, ctx):
        a = run_pipeline(SMALL, "prune_mpq", ctx)
        b = run_pipeline(SMALL, "prune_mpq", prepare(SMALL))
        assert a[1] == b[1]
        assert a[0].accuracy == b[0].accuracy

    def test_degenerate_layer_surfaces(self, ctx):
        ctx.scores("lrp")
        saved = ctx._scores["lrp"]
        try:
            bad = [s.copy() for s in saved.scores]
            bad[1][:] = -1.0
            ctx._scores["lrp"] = type(saved)("lrp", bad, saved.n_samples)
            with pytest.raises(DegenerateLayerError) as info:
                run_pipeline(SMALL, "prune", ctx)
            assert info.value.layer == 1
        finally:
            ctx._scores["lrp"] = saved


class TestComparison:
    def test_matched_sizes(self, ctx):
        report = run_comparison(SMALL, ["lrp", "taylor", "magnitude"], ctx)
        assert len(report.rows) == 9
        for method in {r.method for r in report.rows}:
            rows = [r for r in report.rows if r.method == method]
            assert len({r.size_bytes for r in rows}) == 1
            assert len({r.layer_survivors for r in rows}) == 1

    def test_single_criterion_equals_pipeline(self, ctx):
        report = run_comparison(SMALL, ["lrp"], ctx, runs=(("prune", {}),))
        row, _, _ = run_pipeline(SMALL, "prune", ctx)
        got = report.rows[0]
        assert (got.method, got.criterion, got.size_bytes, got.accuracy, got.layer_survivors) == \
            (row.method, row.criterion, row.size_bytes, row.accuracy, row.layer_survivors)

    def test_unknown_criterion(self, ctx):
        with pytest.raises(InvalidArgumentError):
            run_comparison(SMALL, ["lrp", "oracle"], ctx)


def _report(n=3):
    rows = [ReportRow(f"m{i}", "lrp", 100 + i, 0.5 + i / 10, (3, 2), (0.25, 0.125), 1.5)
            for i in range(n)]
    return ExperimentReport(rows)


class TestEmit:
    def test_csv_lines(self, tmp_path):
        path = emit_report(_report(3), tmp_path / "r.csv", "csv")
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == ",".join(CSV_COLUMNS)

    def test_csv_round_trip(self):
        rep = _report(4)
        back = report_from_csv(report_to_csv(rep))
        assert report_to_csv(back) == report_to_csv(rep)
        assert back.rows[2].tau_values == (0.25, 0.125)

    def test_byte_identical(self, tmp_path):
        rep = _report()
        for fmt in ("csv", "markdown"):
            a = emit_report(rep, tmp_path / f"a.{fmt}", fmt).read_bytes()
            b = emit_report(rep, tmp_path / f"b.{fmt}", fmt).read_bytes()
            assert a == b

    def test_wall_clock_not_in_outputs(self):
        a, b = _report(), _report()
        for row in b.rows:
            row.wall_clock = 99.0
        assert report_to_csv(a) == report_to_csv(b)
        assert report_to_markdown(a) == report_to_markdown(b)

    def test_empty(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            emit_report(ExperimentReport(), tmp_path / "x.csv")

    def test_io_error_names_path(self, tmp_path):
        target = tmp_path / "missing" / "r.csv"
        with pytest.raises(OSError, match="missing"):
            emit_report(_report(), target)

    def test_bad_format(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            emit_report(_report(), tmp_path / "r.txt", "html")


def test_repro_outputs(tmp_path, ctx):
    report, models = repro(SMALL, tmp_path, ctx)
    md = (tmp_path / "report.md").read_text()
    assert "original" in md and "taylor" in md and "magnitude" in md
    files = sorted(p.name for p in (tmp_path / "models").iterdir())
    assert len(files) == len(models)
    for row in report.rows:
        key = f"{row.criterion}_{row.method}"
        blob = models[key]
        assert model_size_bytes(deserialize_model(blob)).total == row.size_bytes
    assert (tmp_path / "timings.json").exists()
    assert PipelineConfig.load(tmp_path / "config.json") == SMALL
