import json
import os

import numpy as np
import pytest

from rmcflab.artifacts import (RunManifest, _minmax_bin, csv_bytes,
                               file_digest, json_bytes, svg_plot, write_json)
from rmcflab.cli import EXPERIMENT_NAMES, config_text, load_config, main


def test_json_bytes_sorted_and_typed():
    data = json_bytes({"b": np.float64(1.5), "a": np.bool_(True),
                       "c": np.int64(3), "d": np.arange(2)})
    text = data.decode("utf-8")
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    parsed = json.loads(text)
    assert parsed["a"] is True
    assert parsed["b"] == 1.5
    assert parsed["c"] == 3
    assert parsed["d"] == [0, 1]


def test_json_bytes_deterministic():
    obj = {"x": [1.0, 2.0], "flag": False}
    assert json_bytes(obj) == json_bytes(dict(reversed(list(obj.items()))))


def test_csv_bytes_format():
    data = csv_bytes({"t": [0.0, 0.1], "v": [1.0, 0.3333333333333333]})
    lines = data.decode("utf-8").split("\r\n")
    assert lines[0] == "t,v"
    assert lines[1] == "0.0,1.0"
    assert lines[2] == "0.1,0.3333333333333333"
    with pytest.raises(ValueError):
        csv_bytes({"a": [1.0], "b": [1.0, 2.0]})


def test_minmax_bin_keeps_spikes():
    x = np.arange(100000, dtype=float)
    y = np.zeros_like(x)
    y[54321] = 7.0
    xb, yb = _minmax_bin(x, y, max_points=2000)
    assert len(xb) <= 2000
    assert np.max(yb) == 7.0


def test_svg_plot_basic():
    t = np.linspace(0.0, 1.0, 50)
    svg = svg_plot({"first": (t, np.sin(t)), "second": (t, np.cos(t))},
                   title="demo").decode("utf-8")
    assert svg.startswith("<svg")
    assert svg.index("first") < svg.index("second")
    assert "polyline" in svg
    empty = svg_plot({}).decode("utf-8")
    assert "no data" in empty


def test_svg_log_scale_drops_nonpositive():
    t = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 0.0, 10.0])
    svg = svg_plot({"s": (t, y)}, log_y=True).decode("utf-8")
    assert "polyline" in svg


def test_manifest_roundtrip(tmp_path):
    src = tmp_path / "input.txt"
    src.write_bytes(b"hello")
    man = RunManifest("cmd", "cfg", 0, "0.1.0")
    man.add_input(str(src))
    man.add_output(str(tmp_path / "a.json"))
    man.add_output(str(tmp_path / "a.json"))
    man.passed = True
    man.wall_clock_s = 1.0
    d = man.as_dict()
    assert d["outputs"] == ["a.json"]
    assert d["inputs"]["input.txt"] == file_digest(str(src))
    path = man.write(str(tmp_path / "manifest.json"))
    assert json.load(open(path))["passed"] is True


def test_config_defaults_and_overlay(tmp_path):
    cfg = load_config()
    assert cfg.getint("common", "seed") == 0
    assert cfg.getfloat("truncation", "delta") == 1e-2
    over = tmp_path / "user.cfg"
    over.write_text("[common]\nseed = 5\n")
    cfg2 = load_config(str(over))
    assert cfg2.getint("common", "seed") == 5
    assert config_text(cfg2) != config_text(cfg)
    assert config_text(cfg2) == config_text(load_config(str(over)))


def test_experiment_name_list():
    assert set(EXPERIMENT_NAMES) == {"cone", "liyau", "harnack", "drift",
                                     "linearization", "entropy", "pipeline",
                                     "ancient"}


def test_cli_spectrum_circle(tmp_path):
    out = str(tmp_path / "run")
    code = main(["--out", out, "spectrum", "--surface", "circle",
                 "--n", "64"])
    assert code == 0
    rep = json.load(open(os.path.join(out, "spectrum.json")))
    assert rep["passed"] is True
    assert os.path.exists(os.path.join(out, "manifest.json"))
    assert os.path.exists(os.path.join(out, "spectrum_circle.csv"))
    assert os.path.exists(os.path.join(out, "spectrum_circle.svg"))


def test_cli_artifacts_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["--out", out, "spectrum", "--surface", "circle",
                     "--n", "64"]) == 0
        outs.append(out)
    for fname in ("spectrum.json", "spectrum_circle.csv",
                  "spectrum_circle.svg"):
        with open(os.path.join(outs[0], fname), "rb") as fh:
            first = fh.read()
        with open(os.path.join(outs[1], fname), "rb") as fh:
            second = fh.read()
        assert first == second
    # manifests agree apart from the wall clock
    m0 = json.load(open(os.path.join(outs[0], "manifest.json")))
    m1 = json.load(open(os.path.join(outs[1], "manifest.json")))
    for m in (m0, m1):
        m.pop("wall_clock_s")
        m.pop("command")  # carries the differing --out path
    assert m0 == m1


def test_cli_usage_errors(tmp_path):
    assert main(["--out", str(tmp_path), "experiment", "nosuch"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[flow]\ndt_cap = banana\n")
    assert main(["--config", str(bad), "--out", str(tmp_path), "flow"]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg"),
                 "--out", str(tmp_path), "flow"]) == 2
