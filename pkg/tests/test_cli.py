import json

import numpy as np
import pytest

from tailwatch.cli import (
    EXIT_DATA,
    EXIT_NO_ALARM,
    EXIT_OK,
    EXIT_USAGE,
    main,
    read_points_csv,
)
from tailwatch.gem import build_gem_baseline
from tailwatch.modelfile import load_model
from tailwatch.theory import theta_of_alpha, wald_approximation


def write_csv(path, array, header=None):
    lines = []
    if header:
        lines.append(",".join(header))
    for row in np.atleast_2d(array):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def nominal_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "nominal.csv"
    write_csv(path, rng.normal(size=(300, 4)), header=["a", "b", "c", "d"])
    return path


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def test_read_points_header_autodetect(tmp_path):
    with_header = tmp_path / "h.csv"
    with_header.write_text("x,y\n1.0,2.0\n3.0,4.0\n")
    bare = tmp_path / "b.csv"
    bare.write_text("1.0,2.0\n3.0,4.0\n")
    np.testing.assert_array_equal(read_points_csv(with_header), read_points_csv(bare))


def test_read_points_ragged_row_names_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(Exception) as err:
        read_points_csv(path)
    assert "row 2" in str(err.value)


def test_read_points_missing_value_rejected(tmp_path):
    path = tmp_path / "missing.csv"
    path.write_text("1.0,2.0\n3.0,\n")
    with pytest.raises(Exception) as err:
        read_points_csv(path)
    assert "row 2" in str(err.value)


# --------------------------------------------------------------------------
# baseline + detect round trip
# --------------------------------------------------------------------------


def test_baseline_gem_reproduces_library_build(tmp_path, nominal_csv):
    out = tmp_path / "model.json"
    code = main(
        [
            "baseline", "gem",
            "--input", str(nominal_csv),
            "--k", "4", "--n1", "100", "--seed", "7",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    loaded = load_model(out)
    reference = build_gem_baseline(read_points_csv(nominal_csv), 100, 4, seed=7)
    assert np.array_equal(loaded.model.sorted_stats, reference.sorted_stats)
    assert loaded.provenance["seed"] == 7
    assert "input_sha256" in loaded.provenance


def test_baseline_pca_and_overrides(tmp_path, nominal_csv):
    out = tmp_path / "pca.json"
    assert main(
        ["baseline", "pca", "--input", str(nominal_csv), "--gamma", "0.9", "--out", str(out)]
    ) == EXIT_OK
    assert load_model(out).kind == "pca"
    out2 = tmp_path / "pca_r.json"
    assert main(
        ["baseline", "pca", "--input", str(nominal_csv), "--r", "2", "--out", str(out2)]
    ) == EXIT_OK
    assert load_model(out2).model.r == 2
    # exactly one selector is required
    assert main(
        ["baseline", "pca", "--input", str(nominal_csv), "--out", str(out)]
    ) == EXIT_USAGE
    assert main(
        [
            "baseline", "pca", "--input", str(nominal_csv),
            "--gamma", "0.9", "--r", "2", "--out", str(out),
        ]
    ) == EXIT_USAGE


def test_baseline_pca_gem_kind(tmp_path, nominal_csv):
    out = tmp_path / "combo.json"
    code = main(
        [
            "baseline", "pca-gem",
            "--input", str(nominal_csv),
            "--r", "2", "--k", "3", "--n1", "80", "--seed", "5",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    loaded = load_model(out)
    assert loaded.kind == "pca+gem"
    assert loaded.model.gem.p == 2


def test_detect_alarm_and_trace(tmp_path, nominal_csv):
    model_path = tmp_path / "model.json"
    main(
        [
            "baseline", "gem",
            "--input", str(nominal_csv),
            "--k", "4", "--n1", "100", "--seed", "7",
            "--out", str(model_path),
        ]
    )
    stream = tmp_path / "stream.csv"
    write_csv(stream, np.full((5, 4), 50.0))
    trace = tmp_path / "trace.csv"
    code = main(
        [
            "detect",
            "--model", str(model_path),
            "--input", str(stream),
            "--h", "0",
            "--trace", str(trace),
        ]
    )
    assert code == EXIT_OK
    lines = [l for l in trace.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "t,score,p_hat,s_hat,g,alarm"
    first = lines[1].split(",")
    assert first[0] == "1" and first[-1] == "1"
    assert len(lines) == 2  # stopped at the first row


def test_detect_no_alarm_exit_path(tmp_path, nominal_csv):
    model_path = tmp_path / "model.json"
    main(
        [
            "baseline", "gem",
            "--input", str(nominal_csv),
            "--k", "4", "--n1", "100", "--seed", "7",
            "--out", str(model_path),
        ]
    )
    stream = tmp_path / "stream.csv"
    write_csv(stream, np.zeros((10, 4)))
    code = main(
        ["detect", "--model", str(model_path), "--input", str(stream), "--h", "1e9"]
    )
    assert code == EXIT_NO_ALARM


def test_detect_dimension_mismatch_is_data_error(tmp_path, nominal_csv, capsys):
    model_path = tmp_path / "model.json"
    main(
        [
            "baseline", "gem",
            "--input", str(nominal_csv),
            "--k", "4", "--n1", "100", "--seed", "7",
            "--out", str(model_path),
        ]
    )
    stream = tmp_path / "narrow.csv"
    write_csv(stream, np.zeros((4, 3)))
    code = main(
        ["detect", "--model", str(model_path), "--input", str(stream), "--h", "1"]
    )
    assert code == EXIT_DATA
    err = capsys.readouterr().err
    assert "4" in err and "3" in err  # names both dimensions


# --------------------------------------------------------------------------
# theory command
# --------------------------------------------------------------------------


def test_theory_json_output(capsys):
    assert main(["theory", "--alpha", "0.2", "--h", "10"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["theta"] == pytest.approx(theta_of_alpha(0.2))
    assert doc["lower_bound"] == pytest.approx(645.58, abs=0.5)
    assert doc["approximation"] == pytest.approx(6520.4, abs=5.0)
    assert doc["wald"] == pytest.approx(wald_approximation(0.2, 10.0))
    assert doc["approximation_interpolated"] is False


def test_theory_flags_interpolated_alpha(capsys):
    assert main(["theory", "--alpha", "0.12", "--h", "5"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["approximation_interpolated"] is True


def test_theory_rejects_alpha_at_or_above_inv_e(capsys):
    assert main(["theory", "--alpha", "0.5", "--h", "10"]) == EXIT_USAGE
    assert "1/e" in capsys.readouterr().err


# --------------------------------------------------------------------------
# simulate command
# --------------------------------------------------------------------------


def test_simulate_grid_row_count_and_reproducibility(tmp_path):
    out1 = tmp_path / "s1.csv"
    out2 = tmp_path / "s2.csv"
    args = [
        "simulate", "grid",
        "--p", "80", "--sigma2", "0.01", "--attack-mag", "0.14",
        "--tau", "200", "--steps", "400", "--seed", "5",
    ]
    assert main(args + ["--out", str(out1)]) == EXIT_OK
    assert main(args + ["--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()
    data = read_points_csv(out1)
    assert data.shape == (400, 80)


def test_simulate_pool_switches_at_tau(tmp_path):
    pre = tmp_path / "pre.csv"
    post = tmp_path / "post.csv"
    write_csv(pre, np.zeros((3, 2)))
    write_csv(post, np.ones((3, 2)))
    out = tmp_path / "stream.csv"
    code = main(
        [
            "simulate", "pool",
            "--pre", str(pre), "--post", str(post),
            "--tau", "3", "--steps", "5", "--seed", "1",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    data = read_points_csv(out)
    np.testing.assert_array_equal(data[:2], 0.0)
    np.testing.assert_array_equal(data[2:], 1.0)


# --------------------------------------------------------------------------
# eval command
# --------------------------------------------------------------------------


@pytest.fixture
def small_grid_model(tmp_path):
    nominal = tmp_path / "grid_nominal.csv"
    assert main(
        [
            "simulate", "grid",
            "--p", "12", "--n-states", "8", "--grid-seed", "3",
            "--steps", "400", "--seed", "2",
            "--out", str(nominal),
        ]
    ) == EXIT_OK
    model = tmp_path / "grid_model.json"
    assert main(
        [
            "baseline", "gem",
            "--input", str(nominal),
            "--k", "4", "--n1", "100", "--seed", "4",
            "--out", str(model),
        ]
    ) == EXIT_OK
    return model


def _read_table(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    return rows


def test_eval_tradeoff_three_rows(tmp_path, small_grid_model):
    out = tmp_path / "tradeoff.csv"
    code = main(
        [
            "eval", "tradeoff",
            "--detector", "proposed",
            "--model", str(small_grid_model),
            "--stream", "grid",
            "--p", "12", "--n-states", "8", "--grid-seed", "3",
            "--attack-mag", "0.5",
            "--thresholds", "1,2,4",
            "--trials", "25", "--horizon", "300", "--seed", "6",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    rows = _read_table(out)
    assert len(rows) == 3
    assert [float(r["h"]) for r in rows] == [1.0, 2.0, 4.0]
    afps = [float(r["afp"]) for r in rows]
    assert afps == sorted(afps)


def test_eval_roc_columns(tmp_path, small_grid_model):
    out = tmp_path / "roc.csv"
    code = main(
        [
            "eval", "roc",
            "--detector", "proposed",
            "--model", str(small_grid_model),
            "--stream", "grid",
            "--p", "12", "--n-states", "8", "--grid-seed", "3",
            "--attack-mag", "1.0",
            "--thresholds", "0.5,2",
            "--trials", "30", "--horizon", "200", "--seed", "8",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    rows = _read_table(out)
    assert len(rows) == 2
    for row in rows:
        assert 0.0 <= float(row["tpr"]) <= 1.0
        assert 0.0 < float(row["far"]) <= 1.0


def test_eval_afp_benchmark_detectors(tmp_path, small_grid_model):
    out = tmp_path / "afp.csv"
    code = main(
        [
            "eval", "afp",
            "--detector", "odit",
            "--model", str(small_grid_model),
            "--stream", "grid",
            "--p", "12", "--n-states", "8", "--grid-seed", "3",
            "--thresholds", "5",
            "--trials", "10", "--horizon", "150", "--seed", "9",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    rows = _read_table(out)
    assert len(rows) == 1
    assert float(rows[0]["afp"]) >= 1.0


def test_eval_quanttree_needs_nominal(tmp_path, small_grid_model):
    out = tmp_path / "x.csv"
    code = main(
        [
            "eval", "afp",
            "--detector", "quanttree",
            "--stream", "grid",
            "--p", "12", "--n-states", "8", "--grid-seed", "3",
            "--thresholds", "50",
            "--trials", "4", "--horizon", "80",
            "--out", str(out),
        ]
    )
    assert code == EXIT_USAGE


def test_usage_errors_exit_two(tmp_path):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["theory", "--alpha", "0.2"]) == EXIT_USAGE  # missing --h
    missing = tmp_path / "nope.csv"
    code = main(
        ["baseline", "gem", "--input", str(missing), "--k", "4", "--n1", "10", "--out", str(tmp_path / "m.json")]
    )
    assert code == EXIT_DATA
