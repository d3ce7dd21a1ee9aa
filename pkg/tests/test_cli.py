import csv
import filecmp
from pathlib import Path

import numpy as np
import pytest

import wtnrank as w
from wtnrank.cli import main

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture_small.csv"
GOLDEN_RANK = DATA / "golden_rank"


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_missing_input_names_path(self, tmp_path, caplog):
        rc = run("rank", "--input", tmp_path / "absent.csv", "--out-dir", tmp_path)
        assert rc == 2
        assert any("absent.csv" in r.message for r in caplog.records)

    def test_zero_delta_rejected(self, tmp_path):
        rc = run(
            "sensitivity", "--input", FIXTURE, "--delta", "0",
            "--group", "AA", "--source-country", "AC", "--source-product", "01",
            "--out-dir", tmp_path,
        )
        assert rc == 2

    def test_bad_alpha_rejected(self, tmp_path):
        rc = run("rank", "--input", FIXTURE, "--alpha", "1.5", "--out-dir", tmp_path)
        assert rc == 2

    def test_unknown_method(self, tmp_path):
        rc = run(
            "sensitivity", "--input", FIXTURE, "--methods", "voodoo",
            "--group", "AA", "--source-country", "AC", "--source-product", "01",
            "--out-dir", tmp_path,
        )
        assert rc == 2

    def test_success_is_zero(self, tmp_path):
        assert run("rank", "--input", FIXTURE, "--out-dir", tmp_path) == 0


class TestSynth:
    def test_writes_loadable_file(self, tmp_path):
        out = tmp_path / "t.csv"
        rc = run("synth", "--seed", 9, "--n-countries", 4, "--n-products", 2,
                 "--density", 0.8, "--out", out)
        assert rc == 0
        tensor = w.load_money_tensor(out, 2016)
        expected = w.synth_tensor(9, 4, 2, 0.8)
        assert tensor.same_trade(expected)

    def test_registry_output(self, tmp_path):
        out = tmp_path / "t.csv"
        reg_path = tmp_path / "registry.txt"
        rc = run("synth", "--seed", 1, "--n-countries", 3, "--n-products", 2,
                 "--density", 1.0, "--out", out, "--registry", reg_path)
        assert rc == 0
        reg = w.load_registry(reg_path)
        assert reg.countries == ("AA", "AB", "AC")


class TestRankGolden:
    def test_matches_golden_files(self, tmp_path):
        rc = run("rank", "--input", FIXTURE, "--out-dir", tmp_path)
        assert rc == 0
        golden = sorted(p.name for p in GOLDEN_RANK.iterdir())
        produced = sorted(p.name for p in tmp_path.iterdir())
        assert produced == golden
        for name in golden:
            assert (tmp_path / name).read_bytes() == (GOLDEN_RANK / name).read_bytes(), name

    def test_golden_importrank_against_independent_sum(self):
        # recompute one probability from the raw fixture with the csv module
        by_node = {}
        total = 0.0
        with open(FIXTURE, encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                value = float(row["value_usd"])
                total += value
                key = (row["importer"], row["product"])
                by_node[key] = by_node.get(key, 0.0) + value
        with open(GOLDEN_RANK / "importrank_nodes.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["country"] == "AC" and rows[0]["product"] == "00"
        expected = by_node[("AC", "00")] / total
        assert float(rows[0]["probability"]) == pytest.approx(expected, rel=1e-12)

    def test_golden_pagerank_against_eigensolver(self):
        from conftest import dense_pagerank_oracle

        tensor = w.load_money_tensor(FIXTURE, 2016)
        direct, _ = w.build_trade_pair(tensor)
        oracle = dense_pagerank_oracle(direct.to_dense())
        with open(GOLDEN_RANK / "pagerank_nodes.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            assert float(row["probability"]) == pytest.approx(
                oracle[int(row["node"])], abs=1e-10
            )


class TestReduce:
    def test_trivial_selection_equals_dense(self, tmp_path):
        rc = run("reduce", "--input", FIXTURE, "--products", "all", "--out-dir", tmp_path)
        assert rc == 0
        tensor = w.load_money_tensor(FIXTURE, 2016)
        direct, inverted = w.build_trade_pair(tensor)
        for tag, matrix in (("import", direct), ("export", inverted)):
            lines = (tmp_path / f"{tag}_reduced_full.csv").read_text().splitlines()
            parsed = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
            assert np.abs(parsed - matrix.to_dense()).max() < 1e-13
            projector = (tmp_path / f"{tag}_projector.csv").read_text().splitlines()[1:]
            assert all(float(x) == 0.0 for line in projector for x in line.split(","))

    def test_weights_sum_to_one(self, tmp_path):
        rc = run(
            "reduce", "--input", FIXTURE, "--group", "AA,AB",
            "--source-country", "AC", "--source-product", "01", "--out-dir", tmp_path,
        )
        assert rc == 0
        text = (tmp_path / "import_diagnostics.txt").read_text()
        values = dict(line.split(" ", 1) for line in text.splitlines())
        total = (
            float(values["weight_direct"])
            + float(values["weight_projector"])
            + float(values["weight_indirect"])
        )
        assert abs(total - 1.0) < 1e-10
        assert abs(float(values["weight_reduced"]) - 1.0) < 1e-10

    def test_source_selection_has_source_node_last(self, tmp_path):
        rc = run(
            "reduce", "--input", FIXTURE, "--group", "AA,AB",
            "--source-country", "AC", "--source-product", "01", "--out-dir", tmp_path,
        )
        assert rc == 0
        header = (tmp_path / "import_reduced_full.csv").read_text().splitlines()[0]
        assert header == "AA:01,AB:01,AC:01"


class TestSensitivityCommand:
    def test_reports_match_module(self, tmp_path):
        rc = run(
            "sensitivity", "--input", FIXTURE, "--group", "AA,AB",
            "--source-country", "AC", "--source-product", "01", "--out-dir", tmp_path,
            "--methods", "regomax,import-export,global-price",
        )
        assert rc == 0
        tensor = w.load_money_tensor(FIXTURE, 2016)
        spec = w.ShockSpec("AC", "01", ("AA", "AB"))
        expected = w.reduced_balance_sensitivity(tensor, spec)
        with open(tmp_path / "sensitivity_regomax.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["country"] for r in rows] == ["AA", "AB"]
        for i, row in enumerate(rows):
            assert float(row["dB_ddelta"]) == pytest.approx(expected.derivative[i], rel=1e-9)
        assert (tmp_path / "sensitivity_import_export.csv").exists()
        assert (tmp_path / "sensitivity_global_price.csv").exists()

    def test_requires_selection_flags(self, tmp_path):
        rc = run("sensitivity", "--input", FIXTURE, "--out-dir", tmp_path)
        assert rc == 2


class TestNetworkCommand:
    def test_default_k_is_four(self, tmp_path):
        rc = run(
            "network", "--input", FIXTURE, "--products", "all", "--out-dir", tmp_path,
        )
        assert rc == 0
        edges = w.parse_edge_csv(tmp_path / "network_import.csv")
        assert edges.k == 4
        assert edges.view == "import"

    def test_round_trip_matches_top_links(self, tmp_path):
        rc = run(
            "network", "--input", FIXTURE, "--group", "AA,AB",
            "--source-country", "AC", "--source-product", "01",
            "--k", 2, "--out-dir", tmp_path,
        )
        assert rc == 0
        tensor = w.load_money_tensor(FIXTURE, 2016)
        direct, _ = w.build_trade_pair(tensor)
        sel = w.Selection.for_countries(
            tensor.registry, ("AA", "AB"), products=("01",),
            extra_nodes=(tensor.registry.node_id("AC", "01"),),
        )
        reduced = w.reduce(direct, sel)
        expected = w.top_links(reduced.reduced, sel.labels(tensor.registry), 2, view="import")
        assert w.parse_edge_csv(tmp_path / "network_import.csv") == expected


class TestConfigFile:
    def test_flags_win_over_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k = 3\nsource-country = AC\nsource_product = 01\ngroup = AA,AB\n")
        out = tmp_path / "out"
        rc = run("network", "--input", FIXTURE, "--config", cfg, "--k", 1, "--out-dir", out)
        assert rc == 0
        edges = w.parse_edge_csv(out / "network_import.csv")
        assert edges.k == 1  # flag beat the config file

    def test_config_supplies_missing_values(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"input = {FIXTURE}\n")
        out = tmp_path / "out"
        assert run("rank", "--config", cfg, "--out-dir", out) == 0


class TestDeterminism:
    def test_rank_twice_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("rank", "--input", FIXTURE, "--out-dir", a) == 0
        assert run("rank", "--input", FIXTURE, "--out-dir", b) == 0
        match, mismatch, errors = filecmp.cmpfiles(
            a, b, [p.name for p in a.iterdir()], shallow=False
        )
        assert not mismatch and not errors
