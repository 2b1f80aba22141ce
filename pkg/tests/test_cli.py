import json
import math

import numpy as np
import pytest

from relaxkit import __version__
from relaxkit.cli import main


def _csv(path):
    rows = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = rows[0].split(",")
    return header, [r.split(",") for r in rows[1:]]


@pytest.fixture
def flip_file(tmp_path):
    p = tmp_path / "flip.json"
    p.write_text(json.dumps({"states": [0, 1], "H": [0, 1, 1, 0], "theta": 1.0,
                             "family": "stable:beta=0.5"}))
    return p


def test_relax_stable(tmp_path):
    rc = main(["relax", "--family", "stable:beta=0.5", "--lambda", "-1", "--tmax", "2",
               "--points", "200", "--out", str(tmp_path)])
    assert rc == 0
    header, rows = _csv(tmp_path / "relax.csv")
    assert header == ["t", "q", "err", "method"]
    row = next(r for r in rows if float(r[0]) == 1.0)
    assert abs(float(row[1]) - 0.4275836) <= 1e-6
    meta = json.loads((tmp_path / "relax.json").read_text())
    assert meta["version"] == __version__ and len(meta["config_hash"]) == 16
    assert (tmp_path / "relax.timing.json").exists()
    first = (tmp_path / "relax.csv").read_text().splitlines()[0]
    assert first.startswith(f"# relaxkit {__version__} config_hash=")


def test_relax_lambda_zero(tmp_path):
    assert main(["relax", "--lambda", "0", "--out", str(tmp_path)]) == 0
    _, rows = _csv(tmp_path / "relax.csv")
    assert all(float(r[1]) == 1.0 for r in rows)


def test_relax_linear(tmp_path):
    assert main(["relax", "--family", "linear:b=1", "--lambda", "-2", "--out", str(tmp_path)]) == 0
    _, rows = _csv(tmp_path / "relax.csv")
    t = np.array([float(r[0]) for r in rows])
    q = np.array([float(r[1]) for r in rows])
    assert np.max(np.abs(q - np.exp(-2 * t))) <= 1e-9


@pytest.mark.parametrize("method", ["cq_backward", "cq_adjoint", "series"])
def test_relax_other_methods(tmp_path, method):
    assert main(["relax", "--lambda", "-1", "--method", method, "--tmax", "1", "--points", "500",
                 "--out", str(tmp_path)]) == 0
    _, rows = _csv(tmp_path / "relax.csv")
    assert rows[-1][3] == method
    assert abs(float(rows[-1][1]) - 0.4275836) <= 5e-3


def test_relax_log_grid(tmp_path):
    assert main(["relax", "--lambda", "-1", "--grid", "log", "--tmax", "100", "--points", "30",
                 "--out", str(tmp_path)]) == 0
    _, rows = _csv(tmp_path / "relax.csv")
    assert len(rows) == 31 and float(rows[1][0]) == pytest.approx(0.1)


def test_matrix_row_sums(tmp_path, flip_file):
    assert main(["matrix", "--model", str(flip_file), "--tmax", "2", "--points", "100",
                 "--out", str(tmp_path)]) == 0
    _, rows = _csv(tmp_path / "matrix.csv")
    sums = {}
    for t, i, j, v in rows:
        sums[(t, i)] = sums.get((t, i), 0.0) + float(v)
    assert max(abs(s - 1) for s in sums.values()) <= 1e-8
    meta = json.loads((tmp_path / "matrix.json").read_text())
    assert meta["residual"]["residual"] <= 1e-2


def test_matrix_renewal_check(tmp_path, flip_file):
    assert main(["matrix", "--model", str(flip_file), "--method", "renewal", "--check-against",
                 "spectral", "--tmax", "3", "--points", "3000", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "matrix.json").read_text())
    assert meta["check_against"]["sup_diff"] <= 5e-3


def test_simulate_deterministic(tmp_path, flip_file):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["simulate", "--model", str(flip_file), "--report", "waiting", "--seed", "3",
                     "--n-paths", "20000", "--t", "0.5,1,2", "--out", str(d),
                     "--workers", str(1 + 3 * k)]) == 0
        outs.append((d / "simulate_waiting.json").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_path_deterministic(tmp_path, flip_file):
    texts = []
    for k in range(2):
        d = tmp_path / f"p{k}"
        assert main(["simulate", "--model", str(flip_file), "--seed", "1", "--t", "20",
                     "--out", str(d)]) == 0
        texts.append((d / "path.csv").read_bytes())
    assert texts[0] == texts[1]
    assert b"T_n,Y_n" in texts[0]


def test_simulate_occupancy(tmp_path, flip_file):
    assert main(["simulate", "--model", str(flip_file), "--report", "occupancy", "--t", "1",
                 "--seed", "5", "--n-paths", "50000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "simulate_occupancy.json").read_text())
    assert rep["within_3se"]


def test_simulate_returns(tmp_path):
    model = tmp_path / "walk.json"
    n = 6
    H = np.zeros((n, n))
    for k in range(n - 1):
        H[k, k + 1] = H[k + 1, k] = 0.5
    H[0, 0] = H[-1, -1] = 0.5
    model.write_text(json.dumps({"H": H.ravel().tolist(), "theta": 1.0,
                                 "family": "stable:beta=0.5"}))
    assert main(["simulate", "--model", str(model), "--report", "returns", "--horizons",
                 "100,1000,10000", "--seed", "2", "--n-paths", "500", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "simulate_returns.json").read_text())
    assert rep["diagnosis"] in ("growing", "saturating")
    assert len(rep["median_returns"]) == 3


def test_simulate_seed_from_environment(tmp_path, flip_file, monkeypatch):
    monkeypatch.setenv("RELAXKIT_SEED", "4")
    assert main(["simulate", "--model", str(flip_file), "--report", "mcq", "--t", "1",
                 "--n-paths", "2000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "simulate_mcq.json").read_text())
    assert rep["seed"] == 4


def test_simulate_requires_seed(tmp_path, flip_file, monkeypatch, capsys):
    monkeypatch.delenv("RELAXKIT_SEED", raising=False)
    assert main(["simulate", "--model", str(flip_file), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "config"


def test_validate_quick(tmp_path, capsys):
    assert main(["validate", "quick", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 5
    rep = json.loads((tmp_path / "validate_quick.json").read_text())
    assert rep["passed"] and rep["seed"] == 7


def test_validate_report_deterministic(tmp_path):
    for k in range(2):
        assert main(["validate", "quick", "--seed", "7", "--out", str(tmp_path / str(k))]) == 0
    a = (tmp_path / "0" / "validate_quick.json").read_bytes()
    b = (tmp_path / "1" / "validate_quick.json").read_bytes()
    assert a == b


def test_unknown_suite(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", "nightly", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["relax", "--family", "stable:beta=1.5", "--lambda", "-1"],
        ["relax", "--family", "gauss:beta=0.5", "--lambda", "-1"],
        ["relax", "--lambda", "1"],
        ["relax", "--lambda", "-1", "--method", "cq_backward", "--grid", "log"],
    ],
)
def test_config_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_missing_model_file(tmp_path):
    assert main(["matrix", "--model", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


def test_hash_ignores_output_dir(tmp_path):
    for d in ("a", "b"):
        main(["relax", "--lambda", "-1", "--points", "10", "--out", str(tmp_path / d)])
    ha = json.loads((tmp_path / "a" / "relax.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b" / "relax.json").read_text())["config_hash"]
    assert ha == hb
    main(["relax", "--lambda", "-2", "--points", "10", "--out", str(tmp_path / "c")])
    assert json.loads((tmp_path / "c" / "relax.json").read_text())["config_hash"] != ha
