import json
import shutil
import subprocess
import sys

import pytest

from derstab.cli import main
from derstab.errors import ParseError
from derstab.scenario import parse_scenario


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.fixture
def two_bus(tmp_path, data_dir):
    for name in ("two_bus.feeder", "two_bus.placement", "two_bus.scn", "tariff.csv"):
        shutil.copy(data_dir / name, tmp_path / name)
    return tmp_path


def test_build_two_bus(two_bus, capsys):
    code, out, _ = run(["build", "--scenario", str(two_bus / "two_bus.scn")], capsys)
    doc = json.loads(out)
    assert code == 0 and (doc["n"], doc["d"], doc["s"]) == (1, 2, 2)


def test_build_fixture(data_dir, capsys):
    code, out, _ = run(["build", "--scenario", str(data_dir / "overvoltage_event.scn")], capsys)
    doc = json.loads(out)
    assert code == 0 and (doc["d"], doc["s"], doc["y"]) == (24, 12, 120)


def test_json_is_byte_identical_across_runs(two_bus, capsys, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["simulate", "--scenario", str(two_bus / "two_bus.scn"), "--out", str(d)]) == 0
        outs.append(((d / "simulate.json").read_bytes(), (d / "trace.csv").read_bytes()))
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_missing_placement_is_input_error(two_bus, capsys):
    (two_bus / "two_bus.placement").unlink()
    code, _, err = run(["build", "--scenario", str(two_bus / "two_bus.scn")], capsys)
    assert code == 2 and "does not exist" in err


def test_bad_scenario_key(two_bus, capsys):
    (two_bus / "bad.scn").write_text("feeder = two_bus.feeder\nplacement = two_bus.placement\ncolour = red\n")
    code, _, err = run(["build", "--scenario", str(two_bus / "bad.scn")], capsys)
    assert code == 2 and "unknown scenario key" in err


def test_require_stable_exit_code(two_bus, capsys):
    scn = two_bus / "zero.scn"
    scn.write_text((two_bus / "two_bus.scn").read_text() + "gain = zero\n")
    code, _, _ = run(["stability", "--scenario", str(scn), "--require-stable"], capsys)
    assert code == 1
    code, out, _ = run(["stability", "--scenario", str(scn)], capsys)
    assert code == 0 and json.loads(out)["rho_exact"] == pytest.approx(1.0)


def test_benchmark_on_zero_reactance_is_numerical_error(tmp_path, data_dir, capsys):
    scn = tmp_path / "cross.scn"
    scn.write_text(f"feeder = {data_dir / 'ieee123_synth.feeder'}\n"
                   f"placement = {data_dir / 'chi1.placement'}\n"
                   "benchmark_pattern = cluster_cross\ngain = benchmark\n")
    code, _, err = run(["stability", "--scenario", str(scn)], capsys)
    assert code == 3 and "ZeroDivisionError" in err


def test_region_outputs(two_bus, capsys, tmp_path):
    out = tmp_path / "r"
    code, text, _ = run(["region", "--scenario", str(two_bus / "two_bus.scn"), "--out", str(out), "--svg"],
                        capsys)
    doc = json.loads((out / "region.json").read_text())
    assert code == 0 and doc["hypercube_certified"] and doc["radius"] > 0
    assert (out / "region_slice.svg").read_text().lstrip().startswith("<?xml")
    assert "Chebyshev radius" in text


def test_range_mode_override(two_bus, capsys):
    widths = {}
    for mode in ("safe", "paper"):
        code, out, _ = run(["region", "--scenario", str(two_bus / "two_bus.scn"), "--range-mode", mode], capsys)
        widths[mode] = json.loads(out)["range_width"]
    # with two parameters both widths reduce to radius * sqrt(2)
    assert widths["safe"] == pytest.approx(widths["paper"])


def test_site_scan_fixture(data_dir, capsys):
    code, out, _ = run(["site-scan", "--scenario", str(data_dir / "siting_step.scn")], capsys)
    rows = {r["placement"]: r for r in json.loads(out)["sitings"]}
    assert code == 0 and rows["chi2.placement"]["radius"] > rows["chi1.placement"]["radius"]


def test_economics_needs_tariff(two_bus, capsys):
    code, _, err = run(["economics", "--scenario", str(two_bus / "two_bus.scn")], capsys)
    assert code == 2 and "tariff" in err


def test_console_script_runs(two_bus):
    exe = shutil.which("derstab")
    cmd = [exe] if exe else [sys.executable, "-m", "derstab.cli"]
    proc = subprocess.run(cmd + ["build", "--scenario", str(two_bus / "two_bus.scn")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["n"] == 1


def test_parse_scenario_rules(tmp_path):
    sc = parse_scenario("feeder = builtin:two_bus.feeder\nplacement = p\nseed = 4\nflat = true\n", tmp_path)
    assert sc.seed == 4 and sc.flat and sc.placement == tmp_path / "p"
    assert sc.feeder.name == "two_bus.feeder" and sc.feeder.exists()
    for bad in ("feeder = a\n", "feeder = a\nplacement = b\ntruth = exact\n",
                "feeder = a\nfeeder = b\nplacement = c\n", "feeder a\n",
                "feeder = a\nplacement = b\nseed = x\n", "feeder = a\nplacement = b\nstart = 2500\n"):
        with pytest.raises(ParseError):
            parse_scenario(bad, tmp_path)
