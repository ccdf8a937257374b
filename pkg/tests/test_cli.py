import csv
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from ktf.cli import EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, main, parse_lambda_grid, UsageError
from ktf.interp import basis_oracle_eval
from ktf.io import bundled, read_grid, write_grid
from ktf.lattice import GridSignal

DATA = Path(__file__).parent / "data"
SAMPLE = str(bundled("sample16.bin"))
SCHEMA = json.loads(bundled("report.schema.json").read_text())


def _validate(path):
    obj = json.loads(Path(path).read_text())
    jsonschema.validate(obj, SCHEMA)
    return obj


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_lambda_grid():
    np.testing.assert_allclose(parse_lambda_grid("0.01:1:3"), [1.0, 0.1, 0.01])
    np.testing.assert_allclose(parse_lambda_grid("0.5:0.5:1"), [0.5])
    for bad in ("1:0.1:3", "0:1:3", "a:b:c", "1:2"):
        with pytest.raises(UsageError):
            parse_lambda_grid(bad)


# fit


def test_fit_lambda_zero_is_identity(tmp_path):
    out = tmp_path / "fit.bin"
    assert main(["fit", "--input", SAMPLE, "--output", str(out), "--k", "1", "--lambda", "0"]) == EXIT_OK
    assert read_grid(out).values.tobytes() == read_grid(SAMPLE).values.tobytes()


def test_fit_admm_matches_dual_reference(tmp_path):
    objs, ktvs = {}, {}
    for solver in ("admm-type1", "dual-ref"):
        out, rep = tmp_path / f"{solver}.bin", tmp_path / f"{solver}.json"
        rc = main(["fit", "--input", SAMPLE, "--output", str(out), "--k", "1", "--lambda", "0.5",
                   "--solver", solver, "--tol-abs", "1e-8", "--tol-rel", "1e-8", "--report", str(rep)])
        assert rc == EXIT_OK
        report = _validate(rep)
        objs[solver] = report["fits"][0]["objective"]
        ktvs[solver] = report["fits"][0]["ktv"]
        # the report's ktv equals an independent ktv run on the written output
        krep = tmp_path / f"{solver}_ktv.json"
        assert main(["ktv", "--input", str(out), "--k", "1", "--report", str(krep)]) == EXIT_OK
        assert _validate(krep)["ktv"] == ktvs[solver]
    rel = abs(objs["admm-type1"] - objs["dual-ref"]) / abs(objs["dual-ref"])
    assert rel <= 1e-4


def test_fit_report_contents(tmp_path):
    rep = tmp_path / "r.json"
    rc = main(["fit", "--input", SAMPLE, "--output", str(tmp_path / "f.bin"), "--k", "0",
               "--lambda-grid", "0.1:1:3", "--report", str(rep)])
    assert rc == EXIT_OK
    report = _validate(rep)
    assert report["dims"] == [16, 16] and report["n"] == 256
    assert [f["lambda"] for f in report["fits"]] == pytest.approx([1.0, np.sqrt(0.1), 0.1])
    for i, f in enumerate(report["fits"]):
        assert Path(f["output"]).name == f"f_{i:02d}.bin"
        assert Path(f["output"]).exists()
        assert f["converged"] and f["iters"] == len(f["primal_residuals"])
        assert 1 <= f["dof"] <= 256
        y = read_grid(SAMPLE).values
        theta = read_grid(f["output"]).values
        s = report["sigma_hat"]
        expected = np.sum((y - theta) ** 2) + 2 * s * s * f["dof"] - 256 * s * s
        assert f["risk_proxy"] == pytest.approx(expected, rel=1e-10)
    # dof subcommand agrees with the report
    drep = tmp_path / "d.json"
    last = report["fits"][-1]
    assert main(["dof", "--input", last["output"], "--k", "0", "--report", str(drep)]) == EXIT_OK
    assert _validate(drep)["dof"] == last["dof"]


@pytest.mark.parametrize("solver", ["admm-type0", "admm-type2", "admm-soft", "dykstra", "dr"])
def test_fit_all_solvers_run(tmp_path, solver):
    rep = tmp_path / "r.json"
    rc = main(["fit", "--input", SAMPLE, "--output", str(tmp_path / "f.bin"), "--k", "1",
               "--lambda", "0.5", "--solver", solver, "--max-iters", "400", "--report", str(rep)])
    assert rc in (EXIT_OK, EXIT_NONCONVERGED)
    assert _validate(rep)["fits"][0]["objective"] == pytest.approx(21.1215641, rel=1e-2)


def test_fit_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "f.bin"
    rc = main(["fit", "--input", SAMPLE, "--output", str(out), "--k", "2", "--lambda", "1",
               "--max-iters", "2", "--no-adaptive-rho"])
    assert rc == EXIT_NONCONVERGED
    assert out.exists()  # partial output still written


def test_fit_csv_and_figures(tmp_path):
    src = tmp_path / "in.csv"
    write_grid(src, read_grid(SAMPLE))
    out, figs = tmp_path / "out.csv", tmp_path / "figs"
    rc = main(["fit", "--input", str(src), "--output", str(out), "--k", "0", "--lambda", "0.3",
               "--figures", str(figs), "--threads", "1"])
    assert rc == EXIT_OK
    assert read_grid(out).shape.dims == (16, 16)
    png = figs / "fit_00.png"
    assert png.exists() and png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_fit_usage_errors(tmp_path):
    out = str(tmp_path / "f.bin")
    assert main(["fit", "--input", SAMPLE, "--output", out]) == EXIT_USAGE
    assert main(["fit", "--input", SAMPLE, "--output", out, "--lambda", "-1"]) == EXIT_USAGE
    assert main(["fit", "--input", SAMPLE, "--output", out, "--lambda", "1", "--k", "-1"]) == EXIT_USAGE
    assert main(["fit", "--input", str(tmp_path / "nope.bin"), "--output", out, "--lambda", "1"]) == EXIT_USAGE
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert main(["fit", "--input", str(bad), "--output", out, "--lambda", "1"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", SAMPLE, "--output", out, "--solver", "gurobi"])
    assert exc.value.code == EXIT_USAGE


# interpolate


def test_interpolate_golden(tmp_path):
    out = tmp_path / "refined.csv"
    rc = main(["interpolate", "--input", str(DATA / "demo_fit16.bin"), "--queries",
               str(DATA / "demo_queries.csv"), "--output", str(out), "--k", "1"])
    assert rc == EXIT_OK
    got = np.loadtxt(out, delimiter=",", skiprows=1)
    golden = np.loadtxt(DATA / "demo_refined_golden.csv", delimiter=",", skiprows=1)
    assert got.shape == (31 * 31, 3)
    np.testing.assert_allclose(got, golden, rtol=0, atol=1e-12)
    # the golden file agrees with the dense basis oracle
    fit = read_grid(DATA / "demo_fit16.bin")
    theta = fit.to_array()
    for row in golden[::7]:
        assert abs(basis_oracle_eval(fit.shape, theta, row[:2], 1) - row[2]) <= 1e-8


def test_interpolate_lattice_points_echo_fit(tmp_path):
    fit = read_grid(DATA / "demo_fit16.bin")
    z = fit.shape.designs
    q = tmp_path / "q.csv"
    q.write_text("".join(f"{a!r},{b!r}\n" for a in z[0].tolist() for b in z[1].tolist()))
    out = tmp_path / "v.csv"
    assert main(["interpolate", "--input", str(DATA / "demo_fit16.bin"), "--queries", str(q),
                 "--output", str(out), "--k", "2"]) == EXIT_OK
    vals = np.loadtxt(out, delimiter=",", skiprows=1)[:, 2]
    assert vals.tobytes() == fit.values.tobytes()


def test_interpolate_empty_queries(tmp_path):
    q = tmp_path / "q.csv"
    q.write_text("x1,x2\n")
    out = tmp_path / "v.csv"
    assert main(["interpolate", "--input", SAMPLE, "--queries", str(q), "--output", str(out)]) == EXIT_OK
    assert out.read_text() == "x1,x2,value\n"


def test_interpolate_errors(tmp_path):
    q = tmp_path / "q.csv"
    q.write_text("0.5\n")
    out = str(tmp_path / "v.csv")
    assert main(["interpolate", "--input", SAMPLE, "--queries", str(q), "--output", out]) == EXIT_USAGE
    q.write_text("x1,x2\n0.5,0.5\n0.5,oops\n")
    assert main(["interpolate", "--input", SAMPLE, "--queries", str(q), "--output", out]) == EXIT_USAGE


# rates


def _rates(tmp_path, tag, seed="0", experiment="one-hot"):
    out, rep = tmp_path / f"{tag}.csv", tmp_path / f"{tag}.json"
    rc = main(["rates", "--experiment", experiment, "--sides", "6,8,10", "--reps", "1",
               "--n-lambda", "5", "--seed", seed, "--output", str(out), "--report", str(rep)])
    return rc, out, rep


def test_rates_bit_identical_and_schema(tmp_path):
    rc1, out1, rep1 = _rates(tmp_path, "a")
    rc2, out2, rep2 = _rates(tmp_path, "b")
    assert rc1 == rc2 == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()
    rows = _read_csv(out1)
    assert {r["method"] for r in rows} == {"ktf", "eigenmaps"}
    assert [int(r["n"]) for r in rows if r["method"] == "ktf"] == [36, 64, 100]
    summary = _validate(rep1)
    assert set(summary["slopes"]) == {"ktf", "eigenmaps"}
    _, out3, _ = _rates(tmp_path, "c", seed="1")
    assert out3.read_bytes() != out1.read_bytes()


def test_rates_figures(tmp_path):
    figs = tmp_path / "figs"
    rc = main(["rates", "--experiment", "linear", "--sides", "6,8,10", "--reps", "1", "--n-lambda", "4",
               "--output", str(tmp_path / "r.csv"), "--figures", str(figs)])
    assert rc == EXIT_OK
    assert (figs / "rates_linear.png").exists()


def test_rates_bad_experiment(tmp_path):
    rc, _, _ = _rates(tmp_path, "x", experiment="wavelets")
    assert rc == EXIT_USAGE
    assert main(["rates", "--experiment", "one-hot", "--sides", "a,b", "--output",
                 str(tmp_path / "r.csv")]) == EXIT_USAGE


# bench


def test_bench_small(tmp_path):
    out, tr, rep, figs = (tmp_path / "t.csv", tmp_path / "tr.csv", tmp_path / "b.json", tmp_path / "figs")
    rc = main(["bench", "--sizes", "16,24", "--k", "1", "--solvers", "admm-type1,admm-type2,dual-ref",
               "--output", str(out), "--traces", str(tr), "--report", str(rep), "--figures", str(figs)])
    assert rc == EXIT_OK
    rows = _read_csv(out)
    assert len(rows) == 6
    assert list(rows[0]) == ["side", "n", "solver", "iters", "seconds", "per_iter_seconds",
                             "time_to_target", "final_rel_subopt"]
    report = _validate(rep)
    assert set(report["optima"]) == {"16", "24"}
    traces = _read_csv(tr)
    assert {r["solver"] for r in traces} == {"admm-type1", "admm-type2", "dual-ref"}
    for r in rows:
        if r["final_rel_subopt"]:
            assert float(r["final_rel_subopt"]) >= -1e-6
    assert (figs / "bench_iterations.png").exists() and (figs / "bench_seconds.png").exists()


@pytest.fixture(scope="module")
def admm_traces(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("traces")
    rc = main(["bench", "--sizes", "32", "--k", "2", "--solvers", "admm-type1,admm-type2",
               "--output", str(tmp / "t.csv"), "--traces", str(tmp / "tr.csv")])
    assert rc == EXIT_OK
    rows = _read_csv(tmp / "tr.csv")
    out = {}
    for s in ("admm-type1", "admm-type2"):
        sub = np.array([float(r["rel_subopt"]) for r in rows if r["solver"] == s])
        out[s] = np.convolve(np.abs(sub), np.ones(3) / 3, mode="valid")[4:]
    return out


@pytest.mark.xfail(strict=True, reason="ADMM objective values are not monotone; small late "
                   "increases occur with and without residual balancing")
def test_bench_admm_traces_nonincreasing(admm_traces):
    for tail in admm_traces.values():
        assert np.all(np.diff(tail) <= 1e-12)


def test_bench_admm_traces_increases_are_small(admm_traces):
    # the reference optimum carries a 1e-6 gap, which floors what can be resolved
    for tail in admm_traces.values():
        assert np.all(np.diff(tail) <= 1e-2 * tail[:-1] + 1e-6)
        assert tail[-1] <= 1e-4 * tail[0]


def test_bench_input_file(tmp_path):
    rc = main(["bench", "--input", SAMPLE, "--k", "1", "--lambda", "0.5", "--solvers", "admm-type1",
               "--output", str(tmp_path / "t.csv")])
    assert rc == EXIT_OK
    rows = _read_csv(tmp_path / "t.csv")
    assert rows[0]["side"] == "16" and float(rows[0]["final_rel_subopt"]) <= 1e-4


def test_bench_unknown_solver(tmp_path):
    assert main(["bench", "--solvers", "cvx", "--output", str(tmp_path / "t.csv")]) == EXIT_USAGE


@pytest.mark.slow
def test_type1_per_iteration_scaling():
    # the bench times this same call; the reference optimum is not needed here
    from ktf.experiments import add_noise, synthetic_image
    from ktf.solvers import AdmmConfig, ktf_admm

    cfg = AdmmConfig(j=1, max_iters=15, eps_abs=1e-12, eps_rel=1e-12)
    ktf_admm(np.zeros((8, 8)) + np.eye(8), 2, 0.05, cfg)
    per = {}
    for N in (64, 256):
        y = add_noise(synthetic_image(N), sigma=0.1, seed=[0, N])
        best = np.inf
        for _ in range(2):
            res = ktf_admm(y, 2, 0.05, cfg)
            best = min(best, res.times[-1] / res.iters)
        per[N] = best
    assert per[256] / per[64] <= 16 ** 1.2


# generate, determinism, entry point


def test_generate_seed_determinism(tmp_path):
    args = ["generate", "--experiment", "one-hot", "--side", "12", "--sigma", "1"]
    main(args + ["--seed", "4", "--output", str(tmp_path / "a.bin")])
    main(args + ["--seed", "4", "--output", str(tmp_path / "b.bin"), "--truth", str(tmp_path / "t.bin")])
    main(args + ["--seed", "5", "--output", str(tmp_path / "c.bin")])
    a, b, c = ((tmp_path / f).read_bytes() for f in ("a.bin", "b.bin", "c.bin"))
    assert a == b and a != c
    truth = read_grid(tmp_path / "t.bin").to_array()
    assert np.count_nonzero(truth) == 1


def test_generate_formats_and_errors(tmp_path):
    assert main(["generate", "--experiment", "image", "--side", "20", "--sigma", "0",
                 "--output", str(tmp_path / "i.pgm")]) == EXIT_OK
    assert read_grid(tmp_path / "i.pgm").shape.dims == (20, 20)
    assert main(["generate", "--experiment", "two-peak-demo", "--d", "3",
                 "--output", str(tmp_path / "x.bin")]) == EXIT_USAGE


def test_fit_seed_has_no_effect_on_deterministic_solver(tmp_path):
    outs = []
    for seed in ("0", "7"):
        out = tmp_path / f"f{seed}.bin"
        main(["fit", "--input", SAMPLE, "--output", str(out), "--k", "1", "--lambda", "0.5", "--seed", seed])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "ktf.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ktf ")


def test_schema_published_in_docs():
    docs = Path(__file__).parents[1] / "docs" / "report.schema.json"
    assert json.loads(docs.read_text()) == SCHEMA
