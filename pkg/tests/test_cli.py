import json

import numpy as np
import pytest

from qkck.cli import main
from qkck.suites import REGISTRY, SUITES, TOLERANCES, SuiteConfig, SuiteError, judge, run_suite
from qkck.tensorio import dump_tensor, load_tensor


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_every_check_has_one_tolerance_entry():
    names = [c.name for s in SUITES for c in REGISTRY[s]]
    assert len(names) == len(set(names))
    assert set(names) == set(TOLERANCES)
    assert all(ref.strip() for _, _, ref in TOLERANCES.values())


def test_verify_flat_report(tmp_path, capsys):
    path = tmp_path / "flat.json"
    code, out = run(["verify", "--suite", "flat", "--n", "2", "--seed", "7", "--report", str(path)], capsys)
    assert code == 0
    report = json.loads(path.read_text())
    assert json.loads(out.out) == report
    assert report["pass"] and report["suite"] == "flat" and report["n"] == 2 and report["seed"] == 7
    assert report["wall_time"] < 10
    assert report["config"]["suite"] == "flat"
    for c in report["checks"]:
        assert set(c) >= {"name", "paper_ref", "max_residual", "tolerance", "pass"}
        assert c["paper_ref"]
    names = [c["name"] for c in report["checks"]]
    assert len(names) == len(set(names))


def test_reports_are_deterministic():
    config = SuiteConfig(suite="qalg", seed=3)
    a, b = run_suite(config), run_suite(config)
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b
    c = run_suite(SuiteConfig(suite="qalg", seed=4))
    assert [x["max_residual"] for x in c["checks"]] != [x["max_residual"] for x in a["checks"]]


def test_grassmannian_suite_reports_nonzero_curvature(capsys):
    code, out = run(["verify", "--suite", "grassmannian"], capsys)
    report = json.loads(out.out)
    check = next(c for c in report["checks"] if c["name"].endswith("RD_nonzero"))
    assert code == 0 and check["pass"] and check["max_residual"] > 1e-3


def test_tolerance_scaling():
    assert judge("flat.ck_family", 5e-9, tol_scale=10)["pass"]
    assert not judge("flat.ck_family", 5e-9)["pass"]
    # lower bounds move the other way
    assert judge("grassmannian.RD_nonzero", 5e-4, tol_scale=10)["pass"]
    assert not judge("grassmannian.RD_nonzero", 5e-3, tol_scale=0.1)["pass"]
    assert not judge("flat.holonomy", 1.0, tol_scale=1e6)["pass"]
    assert not judge("flat.ck_family", float("nan"))["pass"]


def test_failing_suite_exits_one(capsys):
    code, out = run(["verify", "--suite", "qalg", "--tol-scale", "1e-30"], capsys)
    assert code == 1 and not json.loads(out.out)["pass"]


@pytest.mark.parametrize("argv", [
    ["verify", "--suite", "flat", "--n", "1"],
    ["verify", "--suite", "flat", "--samples", "0"],
    ["verify", "--suite", "flat", "--tol-scale", "0"],
    ["verify", "--suite", "grassmannian", "--n", "3"],
    ["verify", "--suite", "flat", "--report", "/nonexistent/dir/r.json"],
    ["dim", "--manifold", "sphere"],
    ["dump", "--what", "nothing", "--out", "x.bin"],
])
def test_usage_errors_exit_two(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _ = run(argv, capsys)
    assert code == 2


def test_unknown_suite_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--suite", "nope"])
    assert exc.value.code == 2
    with pytest.raises(SuiteError):
        run_suite(SuiteConfig(suite="nope"))


def test_dim_flat(capsys):
    code, out = run(["dim", "--manifold", "flat", "--loops", "4", "--seed", "7"], capsys)
    report = json.loads(out.out)
    assert code == 0 and report["fixed_dim"] == 21


def write_waypoints(path, points):
    path.write_text(json.dumps(np.asarray(points).tolist()))
    return str(path)


def test_transport_command(tmp_path, capsys):
    wp = write_waypoints(tmp_path / "wp.json", [np.zeros(8), np.r_[0.2, 0.1, np.zeros(6)], np.r_[0.1, 0.3, 0.1, np.zeros(5)]])
    code, out = run(["transport", "--manifold", "hpn", "--init", "basis:3", "--waypoints", wp, "--check-ck"], capsys)
    report = json.loads(out.out)
    assert code == 0 and report["pass"] and len(report["checks"]) == 2
    assert np.asarray(report["psi"]).shape == (8, 8)
    txt = tmp_path / "wp.txt"
    np.savetxt(txt, [np.zeros(8), np.full(8, 0.1)])
    code, out = run(["transport", "--manifold", "flat", "--init", "random", "--waypoints", str(txt)], capsys)
    assert code == 0


@pytest.mark.parametrize("init", ["basis:21", "basis:x", "orbit"])
def test_transport_rejects_bad_init(init, tmp_path, capsys):
    wp = write_waypoints(tmp_path / "wp.json", [np.zeros(8), np.full(8, 0.1)])
    code, _ = run(["transport", "--init", init, "--waypoints", wp], capsys)
    assert code == 2


def test_transport_rejects_bad_waypoints(tmp_path, capsys):
    code, _ = run(["transport", "--waypoints", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    outside = write_waypoints(tmp_path / "far.json", [np.zeros(8), np.full(8, 0.5)])
    code, _ = run(["transport", "--waypoints", outside], capsys)
    assert code == 2
    short = write_waypoints(tmp_path / "short.json", [np.zeros(4), np.zeros(4)])
    code, _ = run(["transport", "--waypoints", short], capsys)
    assert code == 2


def test_dump_weylq_and_flat_curvature(tmp_path, capsys):
    out = tmp_path / "w.bin"
    assert run(["dump", "--what", "weylq-gr2", "--out", str(out)], capsys)[0] == 0
    header, W = load_tensor(out)
    assert header["kind"] == "weylq" and header["shape"] == [8, 8, 8, 8]
    assert header["convention"] == "lowered" and header["dtype"] == "<f8"
    assert np.linalg.norm(W) > 0
    out = tmp_path / "c.bin"
    assert run(["dump", "--what", "curvature:flat", "--out", str(out)], capsys)[0] == 0
    header, R = load_tensor(out)
    assert header["kind"] == "curvature" and not R.any()


def test_dump_is_byte_stable(tmp_path, capsys):
    files = []
    for k in range(2):
        out = tmp_path / f"h{k}.bin"
        argv = ["dump", "--what", "holonomy:hpn", "--loops", "2", "--steps", "20", "--seed", "5", "--out", str(out)]
        assert run(argv, capsys)[0] == 0
        files.append(out.read_bytes())
    assert files[0] == files[1]
    header, H = load_tensor(tmp_path / "h0.bin")
    assert H.shape == (2, 21, 21) and header["seed"] == 5


def test_tensor_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4, 5))
    header = dump_tensor(tmp_path / "a.bin", a, "curvature", 2, model="test")
    h, b = load_tensor(tmp_path / "a.bin")
    assert h == header and np.array_equal(a, b)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw.split(b"\n", 1)[1] == a.astype("<f8").tobytes()
