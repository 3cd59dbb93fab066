import csv
import json

import pytest

from matrixsrc import cli
from matrixsrc.config import (
    apply_values,
    canonical_json,
    format_config,
    parse_config,
    run_id,
    to_flat,
)
from matrixsrc.errors import ConfigError
from matrixsrc.simulation import SimConfig

WAVE_HEADER = ("t,va,vb,vc,sector,pwm_a,pwm_b,pwm_c,AtH,AtL,AbH,AbL,BtH,BtL,BbH,BbL,"
               "CtH,CtL,CbH,CbL,v_mx,i_L,v_C,i_batt,p_out,f_hf")


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = parse_config(format_config())
        assert to_flat(cfg) == to_flat(SimConfig())
        assert run_id(cfg) == run_id(SimConfig())

    def test_partial_file(self):
        cfg = parse_config('tank.L = 30e-6\ncontrol.mode = "feedforward"\n')
        assert cfg.tank.L == 30e-6 and cfg.control.mode == "feedforward"
        assert cfg.tank.C == SimConfig().tank.C

    def test_all_problems_at_once(self):
        text = "tank.X = 1\nbogus = 2\ntank.L = \"big\"\nduration = -1\nmodulator.dead_time = 1.0\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        msgs = "\n".join(info.value.problems)
        for needle in ("tank.X", "bogus", "tank.L must be a number", "duration", "dead_time"):
            assert needle in msgs

    def test_below_resonance(self):
        with pytest.raises(ConfigError) as info:
            apply_values(SimConfig(), {"modulator.hf_freq_min": 90e3})
        assert any("must be >= tank resonant frequency" in p for p in info.value.problems)

    def test_syntax_error(self):
        with pytest.raises(ConfigError, match="syntax"):
            parse_config("tank.L = = 3")

    def test_run_id(self):
        a = SimConfig()
        b = apply_values(SimConfig(), {"tank.L": 25e-6})
        c = apply_values(SimConfig(), {"tank.L": 26e-6})
        assert run_id(a) == run_id(b) != run_id(c)
        assert len(run_id(a)) == 16
        assert json.loads(canonical_json(a))["dt"] == a.step


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSimulate:
    def test_outputs(self, tmp_path, capsys, warm_kernel):
        out = tmp_path / "a"
        code, _, _ = run_cli(capsys, "simulate", "-o", str(out), "--set", "duration=2e-3",
                             "--gnuplot")
        assert code == 0
        for name in ("waveform.csv", "events.csv", "analysis.json", "manifest.json", "plot.gp"):
            assert (out / name).exists()
        lines = (out / "waveform.csv").read_text().splitlines()
        assert lines[0] == WAVE_HEADER
        assert (out / "events.csv").read_text().splitlines()[0] == "t,kind,device,zvs"
        a = json.loads((out / "analysis.json").read_text())
        assert a["zvs_summary"]["zvs_events"] == a["zvs_summary"]["total_events"] > 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["status"] == "ok" and len(m["run_id"]) == 16
        # full round-trip precision
        row = next(csv.reader(lines[2:3]))
        assert float(row[0]) > 0 and len(row) == len(WAVE_HEADER.split(","))

        out2 = tmp_path / "b"
        assert run_cli(capsys, "simulate", "-o", str(out2), "--set", "duration=2e-3")[0] == 0
        for name in ("waveform.csv", "events.csv", "analysis.json"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes()
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m2["run_id"] == m["run_id"]

    def test_config_file(self, tmp_path, capsys, warm_kernel):
        cfg = tmp_path / "c.toml"
        cfg.write_text("duration = 2e-4\nrecord_decimation = 1\n")
        code, _, _ = run_cli(capsys, "simulate", str(cfg), "-o", str(tmp_path / "o"))
        assert code == 0
        n = len((tmp_path / "o" / "waveform.csv").read_text().splitlines()) - 1
        assert n == round(2e-4 / SimConfig().step)

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("modulator.hf_freq_min = 90e3\nnope = 1\n")
        code, _, err = run_cli(capsys, "simulate", str(cfg), "-o", str(tmp_path / "o"))
        assert code == 2
        assert "resonant frequency" in err and "nope" in err

    def test_missing_config(self, tmp_path, capsys):
        assert run_cli(capsys, "simulate", str(tmp_path / "none.toml"))[0] == 2

    def test_numeric_exit(self, tmp_path, capsys, warm_kernel):
        code, _, err = run_cli(capsys, "simulate", "-o", str(tmp_path / "o"), "--set",
                               "grid.vin_amplitude=1e300", "--set", "duration=1e-4")
        assert code == 3
        assert "numerical blow-up" in err
        m = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert m["status"] == "numeric_failure"


class TestDumpTable:
    def test_text(self, capsys):
        code, out, _ = run_cli(capsys, "dump-table")
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 13
        row = next(l for l in lines[1:] if l.split("|")[0].strip() == "2"
                   and l.split("|")[1].split() == ["1", "1", "0"])
        assert row.split("|")[2].strip() == "1, AH, BH, 1, AL, 1, 1, BL, 0, 0, 0, 0"

    def test_csv(self, capsys):
        code, out, _ = run_cli(capsys, "dump-table", "--format", "csv")
        rows = list(csv.reader(out.splitlines()))
        assert rows[0][:4] == ["sector", "pwm_a", "pwm_b", "pwm_c"]
        assert rows[0][4:] == WAVE_HEADER.split(",")[8:20]
        body = rows[1:]
        assert len(body) == 12
        assert sorted(r[0] for r in body) == sorted("123456" * 2)


class TestEfficiency:
    def test_defaults(self, capsys):
        code, out, _ = run_cli(capsys, "efficiency", "--format", "json")
        assert code == 0
        d = json.loads(out)
        assert round(d["efficiency"], 3) == 0.980

    def test_no_load(self, capsys):
        _, out, _ = run_cli(capsys, "efficiency", "--p_loss_tx", "0", "--p_batt", "1",
                            "--format", "json")
        assert json.loads(out)["efficiency"] == pytest.approx(1.0, abs=1e-5)

    def test_sweep_monotone(self, capsys):
        _, out, _ = run_cli(capsys, "efficiency", "--sweep-r-ds", "0.01,0.02,0.03,0.04",
                            "--format", "json")
        eff = [r["efficiency"] for r in json.loads(out)]
        assert eff == sorted(eff, reverse=True) and len(set(eff)) == 4

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["efficiency", "--r_ds", "-1"])
        assert info.value.code == 2

    def test_text_table(self, capsys):
        _, out, _ = run_cli(capsys, "efficiency", "--format", "text")
        assert "efficiency" in out.splitlines()[0]


class TestSweep:
    ARGS = ("--grid", "control.fixed_freq=95e3:135e3:5", "--grid", "duration=5e-4")
    BASE = "control.mode = \"open_loop_fixed\"\nmodulator.hf_freq_min = 80e3\n" \
           "modulator.allow_below_resonance = true\ngrid.freq = 0.0\ngrid.phase = 0.3\n"

    def test_order_and_parallel_determinism(self, tmp_path, capsys, warm_kernel):
        base = tmp_path / "base.toml"
        base.write_text(self.BASE)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(capsys, "sweep", str(base), *self.ARGS, "-o", str(a))[0] == 0
        assert run_cli(capsys, "sweep", str(base), *self.ARGS, "-j", "3", "-o", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()
        rows = list(csv.DictReader(a.read_text().splitlines()))
        freqs = [float(r["control.fixed_freq"]) for r in rows]
        assert freqs == [95e3, 105e3, 115e3, 125e3, 135e3]
        zvs = [float(r["zvs_fraction"]) for r in rows]
        assert zvs[0] < 1 and zvs[-1] == 1.0

    def test_partial_failure(self, tmp_path, capsys, warm_kernel):
        code, out, _ = run_cli(capsys, "sweep", "--grid", "grid.vin_amplitude=277.1,1e300",
                               "--grid", "duration=1e-4")
        assert code == 4
        rows = list(csv.DictReader(out.splitlines()))
        assert [r["status"] for r in rows] == ["ok", "numeric_failure"]

    def test_unknown_path(self, capsys):
        assert run_cli(capsys, "sweep", "--grid", "tank.Q=1,2")[0] == 2


class TestMisc:
    def test_print_defaults(self, capsys):
        code, out, _ = run_cli(capsys, "print-defaults")
        assert code == 0 and "tank.L = 2.5e-05" in out
        assert parse_config(out)
        assert run_cli(capsys, "--print-defaults")[1] == out

    def test_no_command(self, capsys):
        assert run_cli(capsys)[0] == 2
