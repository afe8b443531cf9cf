"""End-to-end CLI tests: in-process main(), real files, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from parmor.cli import main
from parmor.sysmodel import load_model


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def gen_ladder(name="lad.sp", n=12, params=2, seed=3):
    rc = main(["gen", "rc_ladder", "--n", n, "--params", params,
               "--seed", seed, "-o", name])
    assert rc == 0
    return Path(name)


class TestGen:
    def test_reports_sizes(self, capsys):
        gen_ladder(n=20)
        out = capsys.readouterr().out
        assert "rc_ladder: 20 unknowns, 1 ports, 2 parameters" in out
        assert "wrote lad.sp" in out

    def test_minimal_ladder(self):
        rc = main(["gen", "rc_ladder", "--n", 1, "--params", 0])
        assert rc == 0
        assert Path("rc_ladder.sp").exists()

    def test_manifest(self):
        import hashlib
        path = gen_ladder(seed=9)
        manifest = read_manifest("lad.manifest.json")
        assert manifest["tool"] == "parmor"
        assert manifest["seed"] == 9
        assert manifest["command"][:2] == ["parmor", "gen"]
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        assert manifest["outputs"]["lad.sp"] == digest

    def test_determinism(self):
        gen_ladder("a.sp", seed=5)
        gen_ladder("b.sp", seed=5)
        assert Path("a.sp").read_bytes() == Path("b.sp").read_bytes()

    def test_bus_sizes(self, capsys):
        rc = main(["gen", "coupled_rlc_bus", "--lines", 2, "--segments", 5,
                   "--params", 2, "--coupling", 0.3])
        assert rc == 0
        out = capsys.readouterr().out
        assert "coupled_rlc_bus: 32 unknowns, 4 ports, 2 parameters" in out

    def test_inapplicable_flag_rejected(self, capsys):
        rc = main(["gen", "rc_ladder", "--n", 5, "--depth", 3])
        assert rc == 2
        assert "--depth does not apply to rc_ladder" in capsys.readouterr().err


class TestReduce:
    def test_low_rank_default(self, capsys):
        netlist = gen_ladder()
        rc = main(["reduce", "lad.sp", "--k", 2])
        assert rc == 0
        out = capsys.readouterr().out
        assert "engine = low_rank" in out
        model = load_model("lad.model.json")
        assert model.provenance["engine"] == "low_rank"
        import hashlib
        digest = hashlib.sha256(netlist.read_bytes()).hexdigest()
        assert model.provenance["input_sha256"] == digest
        manifest = read_manifest("lad.model.manifest.json")
        assert manifest["stats"]["factorizations"] == 1

    def test_prima_k0_gives_dc_model(self, capsys):
        gen_ladder()
        rc = main(["reduce", "lad.sp", "--engine", "prima", "--k", 0])
        assert rc == 0
        assert "q = 1" in capsys.readouterr().out

    def test_multi_point_factorization_count(self):
        gen_ladder()
        rc = main(["reduce", "lad.sp", "--engine", "multi_point", "--k", 1,
                   "--sample", "p1=-0.3,p2=0", "--sample", "p1=0.3,p2=0"])
        assert rc == 0
        manifest = read_manifest("lad.model.manifest.json")
        assert manifest["stats"]["factorizations"] == 2

    def test_model_bytes_deterministic(self):
        gen_ladder()
        main(["reduce", "lad.sp", "--k", 2, "-o", "m1.json"])
        main(["reduce", "lad.sp", "--k", 2, "-o", "m2.json"])
        assert Path("m1.json").read_bytes() == Path("m2.json").read_bytes()

    def test_strict_passes_on_rc_bench(self):
        gen_ladder()
        rc = main(["reduce", "lad.sp", "--k", 2, "--strict"])
        assert rc == 0

    def test_bad_k(self, capsys):
        gen_ladder()
        rc = main(["reduce", "lad.sp", "--k", -2])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_floating_deck_exits_3(self, capsys):
        Path("bad.sp").write_text(
            "P1 1 0\nR1 1 0 1\nC1 1 0 1p\nRa a b 2\nCa a 0 1p\n",
            encoding="utf-8")
        rc = main(["reduce", "bad.sp", "--k", 1])
        assert rc == 3
        assert "floating unknowns: a, b" in capsys.readouterr().err


class TestEval:
    def test_netlist_sweep_with_figure(self):
        gen_ladder()
        rc = main(["eval", "lad.sp", "--flog", "6:9:12"])
        assert rc == 0
        lines = Path("lad.eval.csv").read_text().splitlines()
        assert len(lines) == 13
        assert lines[0].startswith("freq_hz,")
        assert Path("lad.eval.png").exists()
        manifest = read_manifest("lad.eval.manifest.json")
        assert set(manifest["outputs"]) == {"lad.eval.csv", "lad.eval.png"}

    def test_no_plot(self):
        gen_ladder()
        rc = main(["eval", "lad.sp", "--flog", "6:8:4", "--no-plot"])
        assert rc == 0
        assert not Path("lad.eval.png").exists()

    def test_model_input(self):
        gen_ladder()
        main(["reduce", "lad.sp", "--k", 2])
        rc = main(["eval", "lad.model.json", "--flog", "6:8:4", "--no-plot"])
        assert rc == 0
        assert Path("lad.model.eval.csv").exists()

    def test_csv_bytes_deterministic(self):
        gen_ladder()
        main(["eval", "lad.sp", "--flog", "6:9:7", "--no-plot", "-o", "a.csv"])
        main(["eval", "lad.sp", "--flog", "6:9:7", "--no-plot", "-o", "b.csv"])
        assert Path("a.csv").read_bytes() == Path("b.csv").read_bytes()

    def test_unknown_parameter_name(self, capsys):
        gen_ladder()
        rc = main(["eval", "lad.sp", "--p", "p9=0.1", "--flog", "6:8:3"])
        assert rc == 2
        assert "unknown parameter 'p9'" in capsys.readouterr().err

    def test_malformed_flog(self, capsys):
        gen_ladder()
        rc = main(["eval", "lad.sp", "--flog", "6:9"])
        assert rc == 2
        assert "--flog expects a:b:N" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        rc = main(["eval", "nope.sp", "--flog", "6:8:3"])
        assert rc == 2


class TestPoles:
    def test_csv(self):
        gen_ladder()
        rc = main(["poles", "lad.sp", "--count", 3])
        assert rc == 0
        lines = Path("lad.poles.csv").read_text().splitlines()
        assert lines[0] == "index,re,im,magnitude"
        assert len(lines) == 4


class TestMoments:
    def test_moment_table(self):
        gen_ladder()
        rc = main(["moments", "lad.sp", "--order", 2])
        assert rc == 0
        with open("lad.moments.json") as handle:
            doc = json.load(handle)
        assert doc["kind"] == "moment_table"
        # graded indices in (s, p1, p2) up to total order 2
        assert len(doc["moments"]) == 10
        assert doc["param_names"] == ["p1", "p2"]

    def test_theorem1_check_passes(self, capsys):
        gen_ladder()
        main(["reduce", "lad.sp", "--k", 2])
        rc = main(["moments", "lad.sp", "--check-model", "lad.model.json",
                   "--order", 2])
        assert rc == 0
        assert "passed = True" in capsys.readouterr().out
        with open("lad.model.theorem1.json") as handle:
            doc = json.load(handle)
        assert doc["kind"] == "theorem1_report"
        assert doc["passed"] is True
        assert doc["dev_nearby_vs_projected"] <= 1e-8

    def test_strict_failure_exits_4(self, capsys):
        gen_ladder()
        main(["reduce", "lad.sp", "--k", 2])
        rc = main(["moments", "lad.sp", "--check-model", "lad.model.json",
                   "--order", 2, "--tol", "1e-30", "--strict"])
        assert rc == 4
        assert "error:" in capsys.readouterr().err

    def test_check_model_requires_low_rank(self, capsys):
        gen_ladder()
        main(["reduce", "lad.sp", "--engine", "prima", "--k", 2])
        rc = main(["moments", "lad.sp", "--check-model", "lad.model.json"])
        assert rc == 2


class TestMc:
    def test_outputs(self):
        gen_ladder()
        main(["reduce", "lad.sp", "--k", 2])
        rc = main(["mc", "lad.sp", "lad.model.json", "--samples", 10,
                   "--poles", 3, "--seed", 1, "--sigma-pct", 5])
        assert rc == 0
        with open("lad.model.mc.summary.json") as handle:
            summary = json.load(handle)
        assert summary["kind"] == "mc_summary"
        assert summary["kept"] + summary["skipped"] == 10
        lines = Path("lad.model.mc.csv").read_text().splitlines()
        assert lines[0] == "sample,pole,rel_error"
        assert len(lines) - 1 == summary["kept"] * 3
        assert Path("lad.model.mc.png").exists()

    def test_model_netlist_mismatch(self, capsys):
        gen_ladder("a.sp", n=10)
        gen_ladder("b.sp", n=11)
        main(["reduce", "a.sp", "--k", 1])
        rc = main(["mc", "b.sp", "a.model.json", "--samples", 2])
        assert rc == 2
        err = capsys.readouterr().err
        assert "does not match" in err
        assert "sha256" in err


class TestCompare:
    def test_two_models(self, capsys):
        gen_ladder()
        main(["reduce", "lad.sp", "--engine", "prima", "--k", 3,
              "-o", "prima.json"])
        main(["reduce", "lad.sp", "--engine", "low_rank", "--k", 3,
              "-o", "lr.json"])
        rc = main(["compare", "lad.sp", "prima.json", "lr.json",
                   "--p", "p1=0.3,p2=0.3", "--flog", "6:10:20"])
        assert rc == 0
        with open("lad.compare.summary.json") as handle:
            summary = json.load(handle)
        assert len(summary["labels"]) == 2
        assert len(summary["max_rel_errors"]) == 2
        assert summary["p"] == [0.3, 0.3]
        header = Path("lad.compare.csv").read_text().splitlines()[0]
        assert header.count("relerr_") == 2
        assert Path("lad.compare.png").exists()
        out = capsys.readouterr().out
        for label in summary["labels"]:
            assert f"{label}: max relative error" in out


class TestConfig:
    def test_config_supplies_defaults(self, capsys):
        gen_ladder()
        Path("cfg.json").write_text('{"k": 1}', encoding="utf-8")
        rc = main(["reduce", "lad.sp", "--engine", "prima",
                   "--config", "cfg.json"])
        assert rc == 0
        assert "q = 2" in capsys.readouterr().out

    def test_explicit_flag_wins(self, capsys):
        gen_ladder()
        Path("cfg.json").write_text('{"k": 1}', encoding="utf-8")
        rc = main(["reduce", "lad.sp", "--engine", "prima", "--k", 0,
                   "--config", "cfg.json"])
        assert rc == 0
        assert "q = 1" in capsys.readouterr().out

    def test_unknown_key_rejected(self, capsys):
        gen_ladder()
        Path("cfg.json").write_text('{"bogus": 1}', encoding="utf-8")
        rc = main(["reduce", "lad.sp", "--config", "cfg.json"])
        assert rc == 2
        assert "not a flag" in capsys.readouterr().err


class TestEntryPoint:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("parmor ")

    def test_no_command(self):
        assert main([]) == 2

    def test_parse_error_in_netlist(self, capsys):
        Path("bad.sp").write_text("P1 1 0\nR1 1 0 oops\n", encoding="utf-8")
        rc = main(["reduce", "bad.sp"])
        assert rc == 2
        assert "line 2" in capsys.readouterr().err
