"""Experiment configuration, sweeps, metrics and result files."""

import csv
import io
import json
import math

import numpy as np
import pytest

from adxhba.advertisers import AdvertiserSpec, random_spec
from adxhba.harness import (
    CSV_HEADER,
    ExperimentConfig,
    MetricsReport,
    ResultRow,
    advertiser_specs,
    axis,
    competitive_ratio,
    default_type_space,
    emit_results,
    param_grid,
    run_cell,
    run_matchup,
    run_nn_protocol,
    run_sweep,
    strategy_class,
)


def tiny(**kw):
    base = dict(days=2, impressions_per_day=50, points=2, seeds=[0, 1],
                km={"k": 20, "l": 2, "k_c": 5}, type_points=2)
    base.update(kw)
    return ExperimentConfig(**base)


class TestCompetitiveRatio:
    def test_plain_ratio(self):
        assert competitive_ratio(45.0, 50.0) == pytest.approx(0.9)

    def test_worked_example(self):
        assert competitive_ratio(92.45, 100.0) == pytest.approx(0.9245)

    def test_zero_over_zero_is_one(self):
        assert competitive_ratio(0.0, 0.0) == 1.0

    def test_positive_over_zero_is_nan(self):
        assert math.isnan(competitive_ratio(1.0, 0.0))

    def test_negative_revenue_rejected(self):
        with pytest.raises(ValueError):
            competitive_ratio(-1.0, 2.0)


class TestGrids:
    def test_axis_endpoints(self):
        assert axis(0.5, 1.0, 3) == [0.5, 0.75, 1.0]
        assert axis(20, 200, 3, integer=True) == [20, 110, 200]
        assert axis(0.0, 1.0, 1) == [0.5]

    def test_cartesian_product(self):
        assert len(param_grid("normal", 3)) == 9
        assert len(param_grid("qlearn", 2)) == 8
        assert len(advertiser_specs("lognormal", 3)) == 9

    def test_classes(self):
        assert strategy_class("ucb") == "adaptive"
        assert strategy_class("exponential") == "randomized"
        assert strategy_class("nn") is None

    def test_type_space_contents(self):
        labels = [s.label for s in default_type_space(3)]
        for kind in ("greedy", "uniform", "normal", "lognormal", "exponential", "ltb", "ucb", "qlearn"):
            assert kind in labels


class TestConfig:
    def test_desk_preset(self):
        cfg = ExperimentConfig.desk()
        assert (cfg.days, cfg.impressions_per_day, len(cfg.seeds), cfg.points) == (10, 200, 10, 3)
        assert cfg.game.daily_budget == 100.0

    def test_full_defaults(self):
        cfg = ExperimentConfig.full()
        assert (cfg.days, cfg.impressions_per_day, len(cfg.seeds)) == (60, 1000, 100)

    def test_seed_count_with_base(self):
        cfg = ExperimentConfig.from_dict({"seeds": 3, "seed": 10})
        assert cfg.seeds == [10, 11, 12]

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="bogus"):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_unknown_publisher(self):
        with pytest.raises(ValueError):
            ExperimentConfig(publishers=["oracle"])

    def test_yaml_and_json_files(self, tmp_path):
        (tmp_path / "c.yaml").write_text("days: 3\nseeds: 2\nadvertisers: [greedy]\n")
        (tmp_path / "c.json").write_text(json.dumps({"days": 3, "seeds": 2, "advertisers": ["greedy"]}))
        a = ExperimentConfig.from_file(tmp_path / "c.yaml", desk=True)
        b = ExperimentConfig.from_file(tmp_path / "c.json", desk=True)
        assert a == b and a.days == 3 and a.impressions_per_day == 200

    def test_round_trip(self):
        cfg = tiny()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


class TestRuns:
    def test_greedy_against_offline_is_one(self):
        _, row, _ = run_matchup(tiny(), AdvertiserSpec("greedy", {"v_max": 0.8}), "offline-opt", 0)
        assert row.competitive_ratio == pytest.approx(1.0)

    def test_errors_are_captured_per_cell(self):
        bad = AdvertiserSpec("greedy", {"v_max": 0.8, "unexpected": 1})
        rep = run_cell(tiny(), bad)
        assert not rep.rows
        assert len(rep.errors) == 2 * len(tiny().publishers)
        assert "TypeError" in rep.errors[0]["error"]

    def test_sweep_is_deterministic_and_ordered(self):
        cfg = tiny(advertisers=["greedy", "uniform"])
        a, b = run_sweep(cfg).to_csv(), run_sweep(cfg).to_csv()
        assert a == b
        rows = list(csv.DictReader(io.StringIO(a)))
        per_advertiser = len(cfg.publishers) * 2 * 2
        assert len(rows) == 2 * per_advertiser
        assert [r["advertiser"] for r in rows[:per_advertiser]] == ["greedy"] * per_advertiser

    def test_workers_do_not_change_output(self):
        cfg = tiny(advertisers=["greedy"])
        par = ExperimentConfig(**{**cfg.to_dict(), "workers": 2})
        assert run_sweep(cfg).to_csv() == run_sweep(par).to_csv()

    def test_progress_callback(self):
        seen = []
        run_sweep(tiny(advertisers=["greedy"]), progress=lambda i, n, c: seen.append((i, n)))
        assert seen == [(1, 2), (2, 2)]


class TestReport:
    rows = [ResultRow("hba-km", "greedy", "v_max=0.5", 0, 1.0, 2.0, 0.5),
            ResultRow("hba-km", "uniform", "high=1", 0, 3.0, 4.0, 0.75),
            ResultRow("ucb-pub", "greedy", "v_max=0.5", 0, 0.5, 2.0, 0.25)]

    def test_aggregate(self):
        agg = MetricsReport(list(self.rows)).aggregate("hba-km")
        assert agg["mean_cr"] == pytest.approx(0.625)
        assert agg["n"] == 2

    def test_class_summary(self):
        s = MetricsReport(list(self.rows)).summary()
        assert s["classes"]["adaptive"]["hba-km"]["mean_cr"] == pytest.approx(0.5)
        assert s["classes"]["randomized"]["hba-km"]["mean_cr"] == pytest.approx(0.75)

    def test_nan_rows_counted_as_invalid(self):
        rows = list(self.rows) + [ResultRow("hba-km", "greedy", "v_max=0.5", 1, 1.0, 0.0, math.nan)]
        agg = MetricsReport(rows).aggregate("hba-km")
        assert agg["invalid"] == 1 and agg["mean_cr"] == pytest.approx(0.625)

    def test_csv_round_trip_six_decimals(self):
        rep = MetricsReport([ResultRow("hba-km", "greedy", "v_max=0.5", 0, 1 / 3, 1.0, 1 / 3)])
        text = rep.to_csv()
        assert text.splitlines()[1].endswith("0.333333,1.000000,0.333333")
        back = MetricsReport.from_csv(text)
        assert back.rows[0].competitive_ratio == pytest.approx(1 / 3, abs=1e-6)

    def test_from_csv_rejects_other_headers(self):
        with pytest.raises(ValueError):
            MetricsReport.from_csv("a,b\n1,2\n")


class TestEmitResults:
    def test_empty_report_writes_header_only(self, tmp_path):
        csv_path, json_path = emit_results(MetricsReport(), tmp_path / "r.csv", tmp_path / "r.json")
        assert csv_path.read_text() == ",".join(CSV_HEADER) + "\n"
        assert json.loads(json_path.read_text())["publishers"] == {}

    def test_json_mean_matches_csv(self, tmp_path):
        rep = run_sweep(tiny(advertisers=["uniform"]))
        csv_path, json_path = emit_results(rep, tmp_path / "out" / "r.csv", tmp_path / "out" / "r.json")
        rows = list(csv.DictReader(csv_path.open()))
        summary = json.loads(json_path.read_text())
        for pub, agg in summary["publishers"].items():
            vals = [float(r["competitive_ratio"]) for r in rows if r["publisher"] == pub]
            assert agg["mean_cr"] == pytest.approx(np.mean(vals), abs=1e-6)

    def test_unwritable_path_names_the_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            emit_results(MetricsReport(), blocker / "r.csv")


class TestNeuralNetProtocols:
    def test_single_rows_and_mse(self):
        cfg = tiny(seeds=[0], nn={"hidden_layers": [1, 2]})
        rep = run_nn_protocol("single", cfg, publishers=("hba-km", "ucb-pub"))
        assert len(rep.rows) == 2 * 2
        assert {r.param_id for r in rep.rows} == {"hidden_layers=1", "hidden_layers=2"}
        for depth, seed, pub, init, final in rep.extras["nn_mse"]:
            assert final < init

    def test_mixture_freezes_after_day_one(self):
        cfg = tiny(seeds=[0], days=3, nn={"hidden_layers": [1]})
        rep = run_nn_protocol("mixture", cfg)
        assert len(rep.rows) == 3
        assert [m[2] for m in rep.extras["nn_mse"]] == ["mixture"]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            run_nn_protocol("pairs", tiny())
