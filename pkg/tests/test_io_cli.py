import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from metcur import cli
from metcur.errors import InputError, ToleranceError
from metcur.io import dump, fixture, read_current, read_functions, read_space


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_space_and_current_files(tmp_path):
    sp = write(tmp_path, "s.json", {"coords": [[0.0], [0.5], [1.0]], "mu": [0.5, 0.5, 0.0]})
    X, mu = read_space(sp)
    assert X.n == 3 and mu.tolist() == [0.5, 0.5, 0.0]
    cur = write(tmp_path, "c.json", {"type": "fragments",
                                     "fragments": [{"times": [0, 0.5, 1], "trace": [0, 1, 2]}]})
    T = read_current(cur, X)
    _, _, want = fixture("seg")
    np.testing.assert_allclose(T.flow, want.flow)
    fn = write(tmp_path, "f.json", {"names": ["1", "x"], "values": [[1, 1, 1], [0, 0.5, 1]]})
    assert read_functions(fn, X).names == ["1", "x"]


@pytest.mark.parametrize("obj", [
    {"points": [1]},
    {"dist": [[0, 2], [1, 0]]},
    {"coords": [[0.0], [1.0]], "mu": [1.0]},
])
def test_bad_space_files(tmp_path, obj):
    with pytest.raises(InputError):
        read_space(write(tmp_path, "s.json", obj))


def test_bad_current_files(tmp_path):
    X, _ = read_space("fixture:seg")
    for obj in [{"type": "nope"}, {"type": "flow", "flow": [[0]]}, {"type": "fragments", "fragments": [{}]}]:
        with pytest.raises(InputError):
            read_current(write(tmp_path, "c.json", obj), X)
    bad = tmp_path / "broken.json"
    bad.write_text("{")
    with pytest.raises(InputError):
        read_current(str(bad), X)


def test_dump_handles_numpy():
    text = dump({"b": np.arange(2), "a": np.float64(0.5), "c": np.bool_(True)})
    assert json.loads(text) == {"a": 0.5, "b": [0, 1], "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_mass_on_segment(capsys):
    code, out, _ = run(capsys, "mass", "--space", "fixture:seg", "--current", "fixture:seg", "--quiet")
    assert code == 0
    rep = json.loads(out)
    assert rep["lower_total"] == pytest.approx(1.0)
    assert rep["upper_total"] == pytest.approx(1.0)


def test_quiet_prints_only_the_report(capsys):
    code, out, err = run(capsys, "renorm", "--space", "fixture:seg", "--eps", "0.1", "--quiet")
    assert code == 0 and err == ""
    assert json.loads(out)["sandwich_ok"] is True


def test_output_is_deterministic(tmp_path, capsys):
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        code, out, _ = run(capsys, "decompose", "--space", "fixture:grid:3", "--current", "fixture:grid:3",
                           "--seed", "7", "--quiet", "--out", str(d))
        assert code == 0
        outs.append((out, (d / "report.json").read_bytes()))
    assert outs[0] == outs[1]


def test_approx_normal_writes_error_series(tmp_path, capsys):
    code, _, _ = run(capsys, "approx-normal", "--space", "fixture:jump", "--current", "fixture:jump",
                     "--quiet", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "errors.csv")))
    assert rows[0] == ["n", "e_n", "fit_residual"]
    e = [float(r[1]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(e, e[1:]))


def test_represent_writes_coefficients(tmp_path, capsys):
    code, _, _ = run(capsys, "represent", "--space", "fixture:grid:2", "--current", "fixture:grid:2",
                     "--quiet", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "lambda.csv").exists()
    assert json.loads((tmp_path / "report.json").read_text())


def test_validate_subcommand(tmp_path, capsys):
    rep = {"P": [1.0], "nu": [[0.5, 0.5]], "fragments": [{"times": [0, 0.5, 1], "trace": [0, 1, 2]}]}
    fr = write(tmp_path, "r.json", rep)
    code, out, _ = run(capsys, "validate", "--space", "fixture:seg", "--current", "fixture:seg",
                       "--fragments", fr, "--quiet")
    assert code == 0
    res = json.loads(out)
    assert res["metric"] and res["representation"]["ok"] and res["normal"]["normal"]


@pytest.mark.parametrize("argv, code", [
    (["frobnicate", "--space", "fixture:seg"], 2),
    (["mass"], 2),
    (["mass", "--space", "fixture:nothing"], 2),
    (["decompose", "--space", "fixture:grid:3", "--current", "fixture:grid:3", "--cone", "1", "0", "0"], 2),
    (["decompose", "--space", "fixture:zero", "--current", "fixture:zero"], 3),
])
def test_exit_codes(capsys, argv, code):
    got, out, err = run(capsys, *argv)
    assert got == code
    assert "error" in err


def test_tolerance_failures_exit_with_four(capsys, monkeypatch):
    def boom(args, X, mu):
        raise ToleranceError("not within tolerance")

    monkeypatch.setitem(cli.HANDLERS, "mass", boom)
    assert run(capsys, "mass", "--space", "fixture:seg")[0] == 4


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "metcur", "renorm", "--space", "fixture:seg", "--eps", "0.1",
                          "--quiet"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["eps"] == 0.1
