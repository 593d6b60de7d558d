import json
import math
import textwrap

import pytest

from prueferlab.cli import main
from prueferlab.manifest import (
    PreconditionError,
    build_manifest,
    load_manifest,
    manifest_hash,
)
from prueferlab.model import ConfigError


BASE = {
    "schema_version": 1,
    "seed": 7,
    "config": {
        "depth": 32,
        "energy": {"lambda": 0.7},
        "sparsity": {"kind": "exponential", "beta": 2},
        "coupling": {"kind": "constant", "p": 0.5},
    },
}


def deep(d):
    return json.loads(json.dumps(d))


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def read_csv(path):
    meta, header, rows = {}, None, []
    for line in path.read_text().splitlines():
        if line.startswith("# "):
            key, value = line[2:].split(": ", 1)
            meta[key] = value
        elif header is None:
            header = line.split(",")
        else:
            rows.append(dict(zip(header, line.split(","))))
    return meta, header, rows


# ---------------------------------------------------------------------------
# manifest parsing


def test_manifest_defaults_and_overrides():
    man = build_manifest(deep(BASE))
    assert man.seed == 7 and man.workers == 1 and man.out_dir is None
    assert man.config.depth == 32
    over = build_manifest(deep(BASE), seed_override=99, workers_override=4,
                          out_override="somewhere")
    assert over.seed == 99 and over.workers == 4 and over.out_dir == "somewhere"


def test_manifest_hash_ignores_execution_knobs():
    base = build_manifest(deep(BASE))
    data = deep(BASE)
    data["workers"] = 8
    data["out_dir"] = "elsewhere"
    assert build_manifest(data).manifest_hash == base.manifest_hash
    assert build_manifest(deep(BASE), seed_override=8).manifest_hash != base.manifest_hash
    # stable across processes: pure function of content
    assert manifest_hash(base.raw) == base.manifest_hash


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("config"),
        lambda d: d.__setitem__("surprise", 1),
        lambda d: d["config"].__setitem__("depth", 0),
        lambda d: d["config"]["sparsity"].__setitem__("kind", "mystery"),
        lambda d: d["config"]["coupling"].__setitem__("p", 0.0),
        lambda d: d["config"]["energy"].__setitem__("pi_fraction", [1, 3]),
        lambda d: d.__setitem__("schema_version", 99),
        lambda d: d.pop("seed"),
    ],
)
def test_manifest_rejects_malformed(mutate):
    data = deep(BASE)
    mutate(data)
    with pytest.raises(ConfigError):
        build_manifest(data)


def test_manifest_band_edge_energy_is_precondition():
    data = deep(BASE)
    data["config"]["energy"] = {"lambda": 2.0}
    with pytest.raises(PreconditionError):
        build_manifest(data)


def test_manifest_grid_validation():
    data = deep(BASE)
    data["phase_diagram"] = {
        "lambda_grid": {"start": -1.0, "stop": 1.0, "count": 5},
        "p_grid": [0.3, 0.5],
        "beta_list": [2, 3],
    }
    man = build_manifest(data)
    lambdas, ps, betas = man.phase_grid()
    assert lambdas == (-1.0, -0.5, 0.0, 0.5, 1.0)
    assert ps == (0.3, 0.5) and betas == (2, 3)
    data["phase_diagram"]["p_grid"] = [0.0, 0.5]  # p must stay inside (0, 1)
    with pytest.raises(ConfigError):
        build_manifest(data).phase_grid()
    data["phase_diagram"]["p_grid"] = [0.5]
    data["phase_diagram"]["lambda_grid"] = [2.5]
    with pytest.raises(ConfigError):
        build_manifest(data).phase_grid()


# ---------------------------------------------------------------------------
# trajectory command


FREE_TRAJ = """
    schema_version = 1
    seed = 7

    [config]
    depth = 64

    [config.energy]
    lambda = 0.7

    [config.sparsity]
    kind = "exponential"
    beta = 2

    [config.coupling]
    kind = "constant"
    p = 1.0
"""


def test_trajectory_free_case_and_determinism(tmp_path):
    manifest = write(tmp_path, "free.toml", FREE_TRAJ)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["trajectory", "--manifest", manifest, "--out", str(out1)]) == 0
    assert main(["trajectory", "--manifest", manifest, "--out", str(out2)]) == 0

    meta, header, rows = read_csv(out1 / "trajectory.csv")
    assert header == ["k", "theta", "log_r2", "certified_bits"]
    assert {"manifest_hash", "seed", "schema_version", "min_certified_bits"} <= set(meta)
    assert len(rows) == 64
    assert all(float(r["log_r2"]) == 0.0 for r in rows)

    for name in ("trajectory.csv", "trajectory_report.json", "run.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_trajectory_ergodic_growth(tmp_path):
    manifest = write(tmp_path, "erg.toml", FREE_TRAJ.replace("p = 1.0", "p = 0.5")
                     .replace("depth = 64", "depth = 2000"))
    out = tmp_path / "erg"
    assert main(["trajectory", "--manifest", manifest, "--out", str(out)]) == 0
    report = json.loads((out / "trajectory_report.json").read_text())
    r = report["ergodic"]["growth_rate"]
    assert r == pytest.approx(1.0 + 1.5**2 / (4.0 - 0.49), rel=1e-12)
    assert report["growth"]["per_step"] == pytest.approx(r, rel=0.1)
    assert report["growth"]["mean_kick"] == pytest.approx(
        math.log(r * 0.25), rel=0.1
    )


# ---------------------------------------------------------------------------
# phase diagram command


PHASE = """
    schema_version = 1
    seed = 7

    [config]
    depth = 8

    [config.energy]
    lambda = 0.7

    [config.sparsity]
    kind = "exponential"
    beta = 2

    [config.coupling]
    kind = "constant"
    p = 0.5

    [phase_diagram]
    lambda_grid = [-2.0, -1.9, -0.5, 0.0, 0.5, 1.9, 2.0]
    p_grid = [0.5]
    beta_list = [2]
"""


def test_phase_diagram_rows(tmp_path):
    manifest = write(tmp_path, "phase.toml", PHASE)
    out = tmp_path / "phase"
    assert main(["phase-diagram", "--manifest", manifest, "--out", str(out)]) == 0
    meta, header, rows = read_csv(out / "phase_diagram.csv")
    assert header == ["lambda", "p", "beta", "phase", "dimension", "i1_value", "beta_over_r"]
    by_lam = {float(r["lambda"]): r for r in rows}
    assert by_lam[0.0]["phase"] == "SC"
    assert float(by_lam[0.0]["dimension"]) == pytest.approx(
        1.0 - math.log(1.5625) / math.log(2), abs=1e-12
    )
    assert by_lam[1.9]["phase"] == "PP" and by_lam[1.9]["dimension"] == ""
    # band-edge rows are included, never silently dropped
    assert by_lam[2.0]["phase"] == "Excluded" and by_lam[-2.0]["phase"] == "Excluded"
    # all formulas depend on lambda**2
    assert by_lam[0.5]["dimension"] == by_lam[-0.5]["dimension"]
    # sorted by (beta, p, lambda)
    lams = [float(r["lambda"]) for r in rows]
    assert lams == sorted(lams)

    report = json.loads((out / "phase_report.json").read_text())
    assert report["counts"]["Excluded"] == 2
    assert {e["reason"] for e in report["excluded"]} == {"BandEdge"}
    assert report["forms_agree_all"] is True


def test_phase_diagram_worker_count_invariance(tmp_path):
    manifest = write(tmp_path, "phase.toml", PHASE)
    outs = []
    for workers in (1, 3):
        out = tmp_path / f"w{workers}"
        code = main([
            "phase-diagram", "--manifest", manifest,
            "--out", str(out), "--workers", str(workers),
        ])
        assert code == 0
        outs.append(out)
    for name in ("phase_diagram.csv", "phase_report.json", "run.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


# ---------------------------------------------------------------------------
# equidist command


EQUIDIST = """
    schema_version = 1
    seed = 11

    [config]
    depth = 256

    [config.energy]
    lambda = 0.7

    [config.sparsity]
    kind = "exponential"
    beta = 2

    [config.coupling]
    kind = "constant"
    p = 0.5

    [equidist]
    ensemble_size = 16
    h_list = [1, 3]
    lengths = [64, 256]
    rational_control = [1, 3]
"""


def test_equidist_verdicts_and_control(tmp_path):
    manifest = write(tmp_path, "eq.toml", EQUIDIST)
    out = tmp_path / "eq"
    assert main(["equidist", "--manifest", manifest, "--out", str(out)]) == 0

    meta, header, rows = read_csv(out / "equidist.csv")
    assert header == ["energy", "h", "n", "i_h", "standard_error", "bound"]
    control_h3 = [r for r in rows if r["energy"] == "rational_control" and r["h"] == "3"]
    assert all(r["bound"] == "inf" for r in control_h3)

    report = json.loads((out / "equidist_report.json").read_text())
    primary = report["sections"]["primary"]["harmonics"]
    assert primary["1"]["verdict"] == "Convergent-trend"
    assert primary["3"]["verdict"] == "Convergent-trend"
    control = report["sections"]["rational_control"]["harmonics"]
    assert control["3"]["verdict"] == "Divergent-trend"
    assert control["3"]["resonant"] is True
    assert report["sections"]["rational_control"]["rationality"] == "rational"


# ---------------------------------------------------------------------------
# regimes command


REGIMES = """
    schema_version = 1
    seed = 7

    [config]
    depth = 32

    [config.energy]
    lambda = 0.7

    [config.sparsity]
    kind = "stretched"
    c = 1.0
    gamma = 2.0

    [config.coupling]
    kind = "constant"
    p = 0.5

    [regimes]
    gamma_list = [2.0, 0.5, 1.0]
    measured_depth = 24
"""


def test_regimes_constant_coupling_rows(tmp_path):
    manifest = write(tmp_path, "reg.toml", REGIMES)
    out = tmp_path / "reg"
    assert main(["regimes", "--manifest", manifest, "--out", str(out)]) == 0
    meta, header, rows = read_csv(out / "regimes.csv")
    assert [r["gamma"] for r in rows] == ["0.5", "1", "2"]  # sorted sweep
    by_gamma = {r["gamma"]: r for r in rows}
    assert by_gamma["0.5"]["regime"] == "pp-everywhere"
    assert by_gamma["1"]["regime"] == "defer-to-classify"
    assert by_gamma["2"]["regime"] == "sc-dimension-1"
    assert float(by_gamma["0.5"]["npp_final_ratio"]) < 1.0
    assert by_gamma["1"]["kappa_T"] == ""  # no measurement for deferred rows


def test_regimes_decaying_coupling_dnor_table(tmp_path):
    text = REGIMES.replace('kind = "constant"\n    p = 0.5', textwrap.dedent("""\
        kind = "decaying"
        c = 1.0
        gamma = 2.0
        c1 = 0.8
        delta = 1.5""")).replace("gamma_list = [2.0, 0.5, 1.0]", "gamma_list = [2.0]") \
        .replace("measured_depth = 24", "measured_depth = 48")
    manifest = write(tmp_path, "regd.toml", text)
    out = tmp_path / "regd"
    assert main(["regimes", "--manifest", manifest, "--out", str(out)]) == 0
    report = json.loads((out / "regimes_report.json").read_text())
    row = report["rows"][0]
    assert row["regime"] == "sc-dimension-0"
    assert row["bracketing"][2] is True
    assert row["alpha_continuous_max"] == 0.0
    bounded = {entry["alpha"]: entry["bounded"] for entry in row["dnor_table"]}
    assert bounded[0.0] is True
    assert all(not flag for alpha, flag in bounded.items() if alpha > 0)


# ---------------------------------------------------------------------------
# exit codes and the error sidecar


def test_exit_code_precision_abort(tmp_path):
    text = FREE_TRAJ.replace("depth = 64", "depth = 600\n    precision_bits = 60")
    manifest = write(tmp_path, "prec.toml", text)
    out = tmp_path / "prec"
    assert main(["trajectory", "--manifest", manifest, "--out", str(out)]) == 3
    error = json.loads((out / "error.json").read_text())
    assert error["error"] == "PrecisionError" and error["exit_code"] == 3


def test_exit_code_preconditions(tmp_path):
    edge = write(tmp_path, "edge.toml", FREE_TRAJ.replace("lambda = 0.7", "lambda = 2.0"))
    assert main(["trajectory", "--manifest", edge, "--out", str(tmp_path / "e")]) == 4
    small = write(tmp_path, "small.toml", EQUIDIST.replace("ensemble_size = 16",
                                                           "ensemble_size = 4"))
    out = tmp_path / "s"
    assert main(["equidist", "--manifest", small, "--out", str(out)]) == 4
    error = json.loads((out / "error.json").read_text())
    assert "ensemble_size" in error["message"]


def test_exit_code_config_errors(tmp_path):
    bad = write(tmp_path, "bad.toml", FREE_TRAJ.replace('kind = "exponential"',
                                                        'kind = "mystery"'))
    assert main(["trajectory", "--manifest", bad, "--out", str(tmp_path / "b")]) == 2
    assert main(["trajectory", "--manifest", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "n")]) == 2
    broken = tmp_path / "broken.toml"
    broken.write_text("= not toml at all [")
    assert main(["trajectory", "--manifest", str(broken),
                 "--out", str(tmp_path / "t")]) == 2


def test_error_sidecar_cleared_on_success(tmp_path):
    manifest = write(tmp_path, "free.toml", FREE_TRAJ)
    out = tmp_path / "o"
    bad = write(tmp_path, "bad.toml", FREE_TRAJ.replace("lambda = 0.7", "lambda = 2.0"))
    assert main(["trajectory", "--manifest", bad, "--out", str(out)]) == 4
    assert (out / "error.json").exists()
    assert main(["trajectory", "--manifest", manifest, "--out", str(out)]) == 0
    assert not (out / "error.json").exists()


def test_run_record_contents(tmp_path):
    manifest = write(tmp_path, "free.toml", FREE_TRAJ)
    out = tmp_path / "o"
    assert main(["trajectory", "--manifest", manifest, "--out", str(out)]) == 0
    record = json.loads((out / "run.json").read_text())
    assert set(record) == {
        "schema_version", "manifest_hash", "seed", "command",
        "min_certified_bits", "files",
    }
    assert record["command"] == "trajectory"
    assert record["files"] == ["trajectory.csv", "trajectory_report.json"]
