import csv
import io
import json
import math
import re

import numpy as np
import pytest
from click.testing import CliRunner

from capbern import fieldio
from capbern.cli import apply_thread_cap, main, run_config, tomllib
from capbern.errors import BadFieldFile
from capbern.grid import GridSpec, ScalarField
from capbern.render import contours, render_svg


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(args):
    return CliRunner().invoke(main, [str(a) for a in args])


SWEEP = """
command = "linearization-sweep"
seed = 0
[params]
theta_list = [0.4, 0.2, 0.1]
h = 0.015625
generator = "planar"
"""


def test_sweep_config_writes_three_rows(tmp_path):
    cfg = _write(tmp_path, SWEEP)
    r = _run(["run", cfg, "--out", tmp_path / "out"])
    assert r.exit_code == 0, r.output
    rows = list(csv.DictReader(io.StringIO((tmp_path / "out" / "sweep.csv").read_text())))
    assert len(rows) == 3
    assert [float(x["theta"]) for x in rows] == [0.4, 0.2, 0.1]
    doc = json.loads((tmp_path / "out" / "result.json").read_text())
    assert doc["status"] == "ok" and doc["command"] == "linearization-sweep"
    assert (tmp_path / "out" / "run.log").exists()


def test_missing_theta_names_key(tmp_path):
    cfg = _write(tmp_path, 'command = "minimize-capillary"\n[params]\nh = 0.0625\n')
    r = _run(["run", cfg, "--out", tmp_path / "o"])
    assert r.exit_code == 1
    doc = json.loads((tmp_path / "o" / "result.json").read_text())
    assert doc["error"]["code"] == "CONFIG_INVALID"
    assert doc["error"]["key"] == "theta"
    assert "theta" in doc["error"]["message"]


@pytest.mark.parametrize(
    "text,key",
    [
        ('command = "nope"\n', "command"),
        ('command = "delta0"\nbogus = 1\n[params]\nn = 4\n', "bogus"),
        ('command = "delta0"\n[params]\nn = 4\ncolour = 1\n', "colour"),
        ('command = "delta0"\n[params]\nn = "four"\n', "n"),
        ('command = "delta0"\nseed = "x"\n[params]\nn = 4\n', "seed"),
    ],
)
def test_config_invalid_keys(tmp_path, text, key):
    code, doc = run_config(tomllib.loads(text), tmp_path, None)
    assert code == 1
    assert doc["error"]["code"] == "CONFIG_INVALID" and doc["error"]["key"] == key


def test_malformed_toml(tmp_path):
    cfg = _write(tmp_path, "command = [\n")
    r = _run(["run", cfg])
    assert r.exit_code == 1 and "CONFIG_INVALID" in r.output


def test_invalid_input_exit_one(tmp_path):
    cfg = _write(tmp_path, 'command = "simons-probe"\n[params]\nfamily = "clifford"\np = 1\nlambda = 1.5\n')
    r = _run(["run", cfg, "--out", tmp_path / "o"])
    assert r.exit_code == 1


def test_soft_failure_exit_two(tmp_path):
    cfg = _write(tmp_path, 'command = "dead-core"\n[params]\ntheta = 0.2\nh = 0.0625\ndata = "shifted-ramp"\n')
    r = _run(["run", cfg, "--out", tmp_path / "o"])
    assert r.exit_code == 2


def test_theta_threshold_n7():
    r = _run(["theta-threshold", "--n", "7"])
    assert r.exit_code == 0
    doc = json.loads(r.stdout)
    assert doc["result"]["theta1"] == 0


def test_theta_threshold_outputs(tmp_path):
    r = _run(["theta-threshold", "--n", "6", "--out", tmp_path])
    assert r.exit_code == 0
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["result"]["theta1"] > 0
    assert all(len(w) == 5 for w in doc["result"]["witness_curve"])
    rows = list(csv.reader(io.StringIO((tmp_path / "margin.csv").read_text())))
    assert rows[0] == ["theta", "p", "margin"] and len(rows) > 10


def test_delta0_and_simons_commands():
    r = _run(["delta0", "--n", "4", "--Lambda", "10"])
    assert r.exit_code == 0 and json.loads(r.stdout)["result"]["delta0"] == pytest.approx(0.01875)
    r = _run(["simons-probe", "--p", "3", "--lambda", "0.5"])
    rec = json.loads(r.stdout)["result"]["records"][0]
    assert r.exit_code == 0
    assert rec["lhs"] == pytest.approx(18) and rec["rhs"] == pytest.approx(90 / 7) and rec["holds"]


CONFIGS = {
    "sweep": SWEEP,
    "minimize": 'command = "minimize-bernoulli"\n[params]\nh = 0.0625\ngenerator = "wedge"\n',
    "hodograph": 'command = "hodograph-check"\n[params]\ntheta = 0.3\nh = 0.0625\n',
    "gauss": 'command = "gauss-bonnet"\n[params]\ntheta = 0.3\nlevel = 3\n',
    "spectrum": 'command = "link-spectrum"\n[params]\ntheta = 0.3\nlevel = 3\n',
    "threshold": 'command = "theta-threshold"\n[params]\nn = 5\n',
}


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_byte_identical_reruns(tmp_path, name):
    cfg = _write(tmp_path, CONFIGS[name])
    outs = []
    for k in range(2):
        r = _run(["run", cfg, "--out", tmp_path / f"o{k}"])
        assert r.exit_code == 0, r.output
        outs.append(tmp_path / f"o{k}")
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "run.log")
    assert "result.json" in files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_thread_cap(monkeypatch):
    import numba

    monkeypatch.setenv("CAPBERN_THREADS", "1")
    assert apply_thread_cap() == 1
    assert numba.get_num_threads() == 1
    monkeypatch.delenv("CAPBERN_THREADS")
    assert apply_thread_cap() is None


def _field(n, fn, hw=1.0):
    g = GridSpec(2, (-hw, -hw), (hw, hw), 2 * hw / n)
    X = np.stack(np.meshgrid(*g.axes(), indexing="ij"), -1)
    return ScalarField(g, fn(X))


def test_render_planar_line():
    f = _field(64, lambda X: np.maximum(X[..., 0], 0))
    cs = contours(f, [0.0])
    assert len(cs) == 1
    assert np.abs(cs[0].points[:, 0]).max() <= 2 * f.grid.h
    assert cs[0].length == pytest.approx(2.0, rel=1e-6)


def test_render_constant_empty_group():
    f = _field(16, lambda X: np.full(X.shape[:-1], 3.0))
    svg = render_svg(f, [1.0])
    group = re.search(r'<g class="level"[^>]*>(.*?)</g>', svg, re.S)
    assert group and group.group(1).strip() == ""


def test_render_circle_length():
    f = _field(128, lambda X: np.maximum(np.linalg.norm(X, axis=-1) - 0.5, 0))
    cs = contours(f, [0.0])
    assert len(cs) == 1 and cs[0].closed
    assert cs[0].length == pytest.approx(math.pi, rel=0.05)


def test_render_command(tmp_path):
    f = _field(32, lambda X: np.maximum(X[..., 0], 0))
    fieldio.save(f, tmp_path / "f.bin")
    r = _run(["render", tmp_path / "f.bin", "--level", "0", "--out", tmp_path / "f.svg"])
    assert r.exit_code == 0
    assert (tmp_path / "f.svg").read_text().count("<polyline") == 1
    (tmp_path / "bad.bin").write_bytes(b"junk")
    r = _run(["render", tmp_path / "bad.bin"])
    assert r.exit_code == 1 and "BAD_FIELD_FILE" in r.output


def test_fieldio_roundtrip(tmp_path):
    g = GridSpec(3, (-1, -0.5, 0), (1, 0.5, 0.5), 0.25)
    f = ScalarField(g, np.random.default_rng(1).random(g.shape))
    back = fieldio.from_bytes(fieldio.to_bytes(f))
    assert back.grid == g and np.array_equal(back.values, f.values)
    fieldio.save(f, tmp_path / "x.bin")
    assert np.array_equal(fieldio.load(tmp_path / "x.bin").values, f.values)
    rows = fieldio.to_csv(f).splitlines()
    assert rows[0] == "x1,x2,x3,value" and len(rows) == 1 + f.values.size


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-8], lambda b: b[:10], lambda b: b + b"\0"])
def test_fieldio_bad_files(mutate, tmp_path):
    f = _field(4, lambda X: X[..., 0])
    with pytest.raises(BadFieldFile):
        fieldio.from_bytes(mutate(fieldio.to_bytes(f)))
    with pytest.raises(BadFieldFile):
        fieldio.load(tmp_path / "missing.bin")
