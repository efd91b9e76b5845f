import csv
import json
import math

import numpy as np
import pytest

from pmstair import Affine, PCFn, dpmf_energy, make_grid
from pmstair.cli import (EXIT_BUDGET, EXIT_OK, EXIT_VALIDATION, fmt,
                         load_config, main, parse_config_text, parse_forcing,
                         to_json)


class TestConfigParsing:
    def test_basic_file(self, tmp_path):
        cfg_path = tmp_path / "run.conf"
        cfg_path.write_text(
            "# comment\n"
            "forcing = step:0;0.5,1\n"
            "beta = 2.5\n"
            "n_list = 100,200\n"
            "output = out.csv\n",
            encoding="utf-8",
        )
        cfg = load_config("scaling", str(cfg_path), [])
        assert cfg.beta == 2.5
        assert cfg.n_list == (100, 200)
        assert cfg.command == "scaling"

    def test_overrides_win(self, tmp_path):
        cfg_path = tmp_path / "run.conf"
        cfg_path.write_text("beta = 1\noutput = a.csv\n", encoding="utf-8")
        cfg = load_config("minimize", str(cfg_path), ["beta=3", "output=b.csv"])
        assert cfg.beta == 3.0
        assert cfg.output == "b.csv"

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            parse_config_text("bogus = 1\n")

    def test_malformed_line(self):
        with pytest.raises(ValueError):
            parse_config_text("beta 1\n")

    def test_validation(self):
        with pytest.raises(ValueError):
            load_config("scaling", None, ["output=x.csv", "beta=-1"])
        with pytest.raises(ValueError):
            load_config("nonsense", None, ["output=x.csv"])


class TestForcingSpec:
    def test_affine(self):
        f = parse_forcing("affine:2,-0.5")
        assert f.slope == 2.0 and f.offset == -0.5

    def test_step(self):
        f = parse_forcing("step:0;0.25,1;0.75,-0.5")
        assert f.base == 0.0
        assert f.jumps() == ((0.25, 1.0), (0.75, -0.5))

    def test_smooth_builtins(self):
        f = parse_forcing("smooth:sin")
        assert float(f.value(np.asarray(0.25))) == pytest.approx(1.0)
        g = parse_forcing("smooth:poly3")
        assert float(g.value(np.asarray(0.5))) == pytest.approx(0.125)

    def test_bad_specs(self):
        for spec in ("affine:1", "step:", "smooth:unknown", "triangle:1"):
            with pytest.raises(ValueError):
                parse_forcing(spec)


class TestJsonWriter:
    def test_sorted_and_17_digits(self):
        text = to_json({"b": 1 / 3, "a": [1, True, None, "x\"y"]})
        assert text.index('"a"') < text.index('"b"')
        assert "0.33333333333333331" in text
        parsed = json.loads(text)
        assert parsed["a"] == [1, True, None, 'x"y']

    def test_fmt(self):
        assert fmt(2.0) == "2"
        assert fmt(1 / 3) == "0.33333333333333331"


class TestCommands:
    def test_minimize_zero_forcing(self, tmp_path):
        out = tmp_path / "min.json"
        code = main(["minimize", "--set", "n=8", "--set", "forcing=affine:0,0",
                     "--set", f"output={out}", "--set", "format=json"])
        assert code == EXIT_OK
        rows = json.loads(out.read_text(encoding="utf-8"))
        total = [r["value"] for r in rows if r["key"] == "energy_total"][0]
        assert total == 0

    def test_minimize_rows_revalidate(self, tmp_path):
        out = tmp_path / "min.json"
        code = main(["minimize", "--set", "n=32", "--set", "forcing=affine:1,0",
                     "--set", f"output={out}", "--set", "format=json"])
        assert code == EXIT_OK
        rows = json.loads(out.read_text(encoding="utf-8"))
        kv = {r["key"]: r["value"] for r in rows}
        values = [kv[str(z)] for z in range(32)]
        u = PCFn(make_grid(0, 1, 1 / 32), values)
        again = dpmf_energy(u, Affine(1.0, 0.0), kv["beta"], 32)
        assert again.total == pytest.approx(kv["energy_total"], rel=1e-9)

    def test_scaling_csv_columns_and_limit(self, tmp_path):
        out = tmp_path / "sc.csv"
        code = main(["scaling", "--set", "forcing=affine:1,0", "--set", "beta=1",
                     "--set", "n_list=50,100", "--set", f"output={out}"])
        assert code == EXIT_OK
        with open(out, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["n", "omega", "m_n", "ratio", "limit_value"]
        assert all(float(r["limit_value"]) == 1.0 for r in rows)
        assert [int(r["n"]) for r in rows] == [50, 100]

    def test_mu_table(self, tmp_path):
        out = tmp_path / "mu.csv"
        code = main(["mu-table", "--set", "L_list=2", "--set", "M_list=1",
                     "--set", "resolution=128", "--set", f"output={out}"])
        assert code == EXIT_OK
        with open(out, newline="", encoding="utf-8") as fh:
            row = next(csv.DictReader(fh))
        assert float(row["formula_value"]) == pytest.approx(2.0)
        assert float(row["lower"]) == pytest.approx(2 - (8 / 3) * 6 ** (2 / 3), rel=1e-12)
        assert float(row["upper"]) == pytest.approx(4.0)

    def test_check_localmin(self, tmp_path):
        out = tmp_path / "ck.csv"
        code = main(["check-localmin", "--set", "M_list=1", "--set", f"output={out}"])
        assert code == EXIT_OK
        with open(out, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert all(r["passed"] == "true" for r in rows)

    def test_blowup_small(self, tmp_path):
        out = tmp_path / "bu.json"
        code = main(["blowup", "--set", "n=2000", "--set", "forcing=affine:1,0",
                     "--set", "center=0.5", "--set", f"output={out}",
                     "--set", "format=json"])
        assert code == EXIT_OK
        kv = {r["key"]: r["value"] for r in json.loads(out.read_text(encoding="utf-8"))}
        assert kv["predicted_H"] == 1
        assert kv["predicted_V"] == 1

    def test_csv_quoting_roundtrip(self, tmp_path):
        out = tmp_path / "min.csv"
        code = main(["minimize", "--set", "n=4", "--set", "forcing=step:0;0.5,1",
                     "--set", f"output={out}"])
        assert code == EXIT_OK
        with open(out, newline="", encoding="utf-8") as fh:
            rows = {r["key"]: r["value"] for r in csv.DictReader(fh)}
        assert rows["forcing"] == "step:0;0.5,1"

    def test_exit_codes(self, tmp_path):
        assert main(["scaling", "--set", "n_list=1",
                     "--set", f"output={tmp_path/'x.csv'}"]) == EXIT_VALIDATION
        assert main(["minimize", "--set", "beta=-2",
                     "--set", f"output={tmp_path/'x.csv'}"]) == EXIT_VALIDATION
        # label budget at large n surfaces as the budget exit code
        assert main(["minimize", "--set", "n=10000", "--set", "label_count=200",
                     "--set", f"output={tmp_path/'y.csv'}"]) == EXIT_BUDGET
        # unwritable output
        assert main(["minimize", "--set", "n=4",
                     "--set", "output=/nonexistent-dir/x.csv"]) == EXIT_VALIDATION

    def test_unknown_command_rejected_by_argparse(self):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--set", "output=x.csv"])


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        args = ["scaling", "--set", "forcing=affine:1,0", "--set", "n_list=60,120",
                "--set", "seed=1"]
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert main(args + ["--set", f"output={out1}"]) == EXIT_OK
        assert main(args + ["--set", f"output={out2}"]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_json_byte_identical(self, tmp_path):
        args = ["minimize", "--set", "n=16", "--set", "forcing=step:0;0.5,1",
                "--set", "format=json"]
        out1 = tmp_path / "a.json"
        out2 = tmp_path / "b.json"
        assert main(args + ["--set", f"output={out1}"]) == EXIT_OK
        assert main(args + ["--set", f"output={out2}"]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
