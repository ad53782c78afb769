import filecmp
import json
import re

import numpy as np
import pytest

from telescale.cli import main
from telescale.experiment import resolve_threads
from telescale.ingest import FlowRecord, write_flows
from telescale.reference import fbm_path
from telescale.samplers import substream
from telescale.tabular import read_table, write_table


def stream(name, alpha, coefficient, exponent, rate=None):
    return {
        "name": name,
        "duration": {"alpha": alpha, "xm": 1.0},
        "rate": rate or {"kind": "constant", "value": 1.0},
        "intensity": {"coefficient": coefficient, "exponent": exponent},
    }


FAST = stream("fast", 1.5, 1.0, 1.0)
SLOW = stream("slow", 1.9, 1.0, 0.0)


def write_config(path, streams, **kw):
    doc = {"schema_version": 1, "streams": streams, "T": [50], "grid": {"points": [0.5, 1.0]}, "replications": 20, "seed": 7}
    doc.update(kw)
    path.write_text(json.dumps(doc))
    return str(path)


def regime_fields(text):
    return dict(line.split(": ", 1) for line in text.splitlines())


def test_classify_fast_plus_slow(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", [FAST, SLOW])
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = regime_fields(capsys.readouterr().out)
    assert doc["scenario"] == "F" and doc["limit"] == "FBM"
    assert float(doc["limit.hurst"]) == 0.75 and float(doc["limit.sigma2"]) == pytest.approx(16 / 3)
    assert (tmp_path / "o" / "regime.txt").read_text().startswith("schema: telescale.regime/1")


def test_classify_slow_and_boundary(tmp_path, capsys):
    assert main(["classify", "--config", write_config(tmp_path / "s.json", [SLOW])]) == 0
    assert regime_fields(capsys.readouterr().out)["scenario"] == "S"
    boundary = stream("b", 1.5, 1.0, 1.0, {"kind": "pareto", "alpha": 1.5})
    assert main(["classify", "--config", write_config(tmp_path / "b.json", [boundary])]) == 2


def test_simulate_silent_streams_give_zero_paths(tmp_path):
    cfg = write_config(tmp_path / "c.json", [stream("off", 1.5, 0.0, 0.0)], replications=1)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    meta, cols = read_table(open(tmp_path / "o" / "paths" / "T0" / "rep000000.tsv"))
    assert np.all(cols["raw"] == 0) and np.all(cols["centered_scaled"] == 0)


def test_simulate_deterministic_across_threads(tmp_path, monkeypatch):
    monkeypatch.delenv("TELESCALE_THREADS", raising=False)
    cfg = write_config(tmp_path / "c.json", [FAST, SLOW])
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert filecmp.cmp(tmp_path / "a" / "marginals_T0.tsv", tmp_path / "b" / "marginals_T0.tsv", shallow=False)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "8"]) == 0
    assert not filecmp.cmp(tmp_path / "a" / "marginals_T0.tsv", tmp_path / "c" / "marginals_T0.tsv", shallow=False)


def test_session_budget_error_names_stream(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", [FAST], T=[1e7], session_cap=1e6)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "'fast'" in err and "T=10000000" in err


def _fake_marginals(path, grid, values, limit):
    cols = {"rep": np.arange(values.shape[0])}
    cols.update({format(t, ".17g"): values[:, k] for k, t in enumerate(grid)})
    with open(path, "w") as fh:
        write_table(fh, cols, {"kind": "marginals", "limit": limit})


def verdicts(out):
    rows = [ln.split("\t") for ln in (out / "verdict.tsv").read_text().splitlines()[2:]]
    return {r[1]: r[6] for r in rows}


def test_verify_fbm_on_gaussian_fixture(tmp_path, capsys):
    out = tmp_path / "o"
    out.mkdir()
    grid = np.array([0.25, 0.5, 0.75, 1.0])
    x = fbm_path(0.75, 16 / 3, np.r_[0.0, grid], substream(1), n_paths=1000).values[:, 1:]
    _fake_marginals(out / "marginals_T0.tsv", grid, x, "FBM")
    cfg = write_config(tmp_path / "c.json", [FAST], grid={"points": grid.tolist()})
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    v = verdicts(out)
    assert v == {"ad_normal": "PASS", "variance": "PASS", "hurst": "PASS"}
    assert re.search(r"^PASS T=50 hurst", capsys.readouterr().out, re.M)


def test_verify_stable_prediction_fails_on_gaussian(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    x = np.random.default_rng(2).normal(size=(2000, 2))
    _fake_marginals(out / "marginals_T0.tsv", np.array([0.5, 1.0]), x, "StableLevy")
    cfg = write_config(tmp_path / "c.json", [stream("slow", 1.5, 1.0, 0.0)])
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    v = verdicts(out)
    assert v["hill_tail"] == "FAIL" and v["ad_reject"] == "FAIL"


def test_verify_empty_toggles_and_missing_input(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", [FAST], analysis={"normality": False, "tail": False, "hurst": False})
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 1
    assert "run simulate first" in capsys.readouterr().err
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "verdict.tsv").read_text().splitlines()[1:] == ["T\tcheck\tt\tobserved\texpected\ttolerance\tverdict\tnote"]


def test_verify_is_pure_function_of_marginals(tmp_path):
    cfg = write_config(tmp_path / "c.json", [FAST, SLOW])
    out = tmp_path / "o"
    main(["simulate", "--config", cfg, "--out", str(out)])
    main(["verify", "--config", cfg, "--out", str(out)])
    first = (out / "verdict.tsv").read_bytes()
    main(["verify", "--config", cfg, "--out", str(out)])
    assert (out / "verdict.tsv").read_bytes() == first


def test_ingest_outputs_and_errors(tmp_path, capsys):
    flows = tmp_path / "f.tsv"
    rng = np.random.default_rng(3)
    recs = [FlowRecord(float(60 * i + 1), 0.5, int(b), "tcp") for i, b in enumerate(rng.integers(1000, 2000, 200))]
    recs += [FlowRecord(float(60 * i + 2), 0.5, int(b), "udp") for i, b in enumerate(rng.pareto(1.6, 200) * 1000 + 1)]
    with open(flows, "w") as fh:
        write_flows(fh, recs)
    out = tmp_path / "o"
    assert main(["ingest", str(flows), "--out", str(out), "--window", "60", "--mode", "uniform-spread"]) == 0
    names = sorted(p.name for p in out.iterdir())
    for tag in ("tcp", "udp", "aggregate"):
        assert {f"qq_normal_{tag}.tsv", f"qq_log_{tag}.tsv", f"hill_{tag}.tsv"} <= set(names)
    meta, cols = read_table(open(out / "windows.tsv"))
    assert cols["tcp"].sum() == sum(r.bytes for r in recs if r.protocol == "tcp")
    bad = tmp_path / "bad.tsv"
    bad.write_text("start\tduration\tbytes\tprotocol\n1\t1\tmany\ttcp\n")
    assert main(["ingest", str(bad), "--out", str(out)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_ingest_empty_input(tmp_path):
    flows = tmp_path / "f.tsv"
    flows.write_text("start\tduration\tbytes\tprotocol\n")
    out = tmp_path / "o"
    assert main(["ingest", str(flows), "--out", str(out)]) == 0
    assert (out / "windows.tsv").read_text() == "window\tstart\n"
    meta, cols = read_table(open(out / "diagnostics.tsv"))
    assert all(c.size == 0 for c in cols.values())


def test_plot_two_point_series(tmp_path):
    src = tmp_path / "pts.tsv"
    src.write_text("x\ty\n0\t1\n1\t3\n")
    assert main(["plot", str(src), "--out", str(tmp_path / "a")]) == 0
    assert main(["plot", str(src), "--out", str(tmp_path / "b")]) == 0
    svg = (tmp_path / "a" / "pts.svg").read_text()
    assert svg.count('class="mark"') == 2
    assert svg == (tmp_path / "b" / "pts.svg").read_text()


def test_plot_hill_band_and_paths(tmp_path):
    hill_file = tmp_path / "hill_x.tsv"
    with open(hill_file, "w") as fh:
        write_table(fh, {"k": np.arange(1, 11), "alpha": np.linspace(1.4, 1.6, 10)}, {"kind": "hill"})
    fbm = tmp_path / "ref.tsv"
    with open(fbm, "w") as fh:
        fbm_path(0.75, 1.0, [0.0, 0.5, 1.0], substream(0), n_paths=2).write(fh)
    assert main(["plot", str(hill_file), str(fbm), "--out", str(tmp_path / "o")]) == 0
    assert '<polygon class="band"' in (tmp_path / "o" / "hill_x.svg").read_text()
    assert (tmp_path / "o" / "paths.svg").read_text().count('class="path"') == 2


def test_plot_malformed(tmp_path, capsys):
    src = tmp_path / "bad.tsv"
    src.write_text("a\tb\tc\n1\t2\t3\n")
    assert main(["plot", str(src), "--out", str(tmp_path / "o")]) == 1
    assert "columns" in capsys.readouterr().err


def test_threads_env_override(monkeypatch):
    monkeypatch.setenv("TELESCALE_THREADS", "3")
    assert resolve_threads(8, 2) == 3
    monkeypatch.setenv("TELESCALE_THREADS", "zero")
    with pytest.raises(ValueError):
        resolve_threads(8)
    monkeypatch.delenv("TELESCALE_THREADS")
    assert resolve_threads(8, 2) == 8 and resolve_threads(None, 2) == 2


def test_bad_config_exits_1(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "streams": [FAST], "T": [1], "grid": {"n": 2}, "typo": 1}))
    assert main(["classify", "--config", str(p)]) == 1
    assert "typo" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == 2
