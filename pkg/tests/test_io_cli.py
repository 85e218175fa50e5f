"""CSV ingestion, artifact serialization, and command-line behavior."""

import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tsfactor.cli import run
from tsfactor.errors import IngestError
from tsfactor.io import (
    fmt_float,
    ingest_csv,
    ingest_matrix_csv,
    read_loadings_csv,
    write_loadings_csv,
    write_trace_kv,
)


def write_panel_csv(path, p=12, n=90, seed=5, header=True):
    """Write a small factor-structured panel and return its raw values."""
    rng = np.random.default_rng(seed)
    loading = rng.standard_normal((p, 2))
    x = np.zeros((n, 2))
    for t in range(1, n):
        x[t] = 0.7 * x[t - 1] + rng.standard_normal(2)
    y = x @ loading.T + 0.3 * rng.standard_normal((n, p))
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(f"s{j + 1}" for j in range(p)) + "\n")
        for row in y:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")
    return y


def write_matrix_csv(path, n=60, p1=5, p2=4, seed=3):
    rng = np.random.default_rng(seed)
    arr = rng.standard_normal((n, p1, p2))
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"c{j + 1}" for j in range(p2)) + "\n")
        for t in range(n):
            for i in range(p1):
                fh.write(f"{t + 1}," + ",".join(fmt_float(v) for v in arr[t, i]) + "\n")
    return arr


def read_kv(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        key, value = line.split("=", 1)
        out[key] = value
    return out


class TestIngestCsv:
    def test_two_row_single_column_demeans_to_plus_minus_one(self, tmp_path):
        f = tmp_path / "tiny.csv"
        f.write_text("x\n1\n3\n")
        panel = ingest_csv(f)
        assert panel.names == ("x",)
        assert panel.demeaned
        np.testing.assert_allclose(panel.data, [[-1.0], [1.0]])

    def test_headerless_numeric_file_gets_default_names(self, tmp_path):
        f = tmp_path / "plain.csv"
        f.write_text("1,2\n3,4\n5,9\n")
        panel = ingest_csv(f, demean_panel=False)
        assert panel.names == ("v1", "v2")
        assert panel.data.shape == (3, 2)
        np.testing.assert_allclose(panel.data, [[1, 2], [3, 4], [5, 9]])

    def test_demean_is_on_by_default(self, tmp_path):
        f = tmp_path / "p.csv"
        raw = write_panel_csv(f, p=4, n=30)
        panel = ingest_csv(f)
        np.testing.assert_allclose(panel.data, raw - raw.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(
            ingest_csv(f, demean_panel=False).data, raw, atol=0
        )

    def test_non_numeric_cell_reports_row_and_column(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b\n1,2\n3,NA\n")
        with pytest.raises(IngestError) as info:
            ingest_csv(f)
        assert info.value.row == 3
        assert info.value.column == 2
        assert "NA" in str(info.value)

    def test_non_finite_cell_rejected_with_location(self, tmp_path):
        f = tmp_path / "inf.csv"
        f.write_text("1,2\ninf,4\n")
        with pytest.raises(IngestError) as info:
            ingest_csv(f)
        assert info.value.row == 2
        assert info.value.column == 1

    def test_ragged_row_reports_line(self, tmp_path):
        f = tmp_path / "ragged.csv"
        f.write_text("1,2\n3,4\n5\n")
        with pytest.raises(IngestError) as info:
            ingest_csv(f)
        assert info.value.row == 3
        assert "expected 2" in str(info.value)

    def test_empty_and_header_only_files_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(IngestError):
            ingest_csv(empty)
        header_only = tmp_path / "h.csv"
        header_only.write_text("a,b\n")
        with pytest.raises(IngestError):
            ingest_csv(header_only)

    def test_missing_file_raises_ingest_error(self, tmp_path):
        with pytest.raises(IngestError):
            ingest_csv(tmp_path / "nope.csv")

    def test_blank_lines_are_skipped(self, tmp_path):
        f = tmp_path / "blank.csv"
        f.write_text("a,b\n1,2\n\n3,4\n\n")
        panel = ingest_csv(f, demean_panel=False)
        assert panel.data.shape == (2, 2)


class TestIngestMatrixCsv:
    def test_blocks_parse_to_three_dim_array(self, tmp_path):
        f = tmp_path / "m.csv"
        arr = write_matrix_csv(f, n=7, p1=3, p2=2)
        mp = ingest_matrix_csv(f)
        assert (mp.n, mp.p1, mp.p2) == (7, 3, 2)
        np.testing.assert_array_equal(mp.data, arr)

    def test_headerless_matrix_file_parses(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("1,1.0,2.0\n1,3.0,4.0\n2,5.0,6.0\n2,7.0,8.0\n")
        mp = ingest_matrix_csv(f)
        assert (mp.n, mp.p1, mp.p2) == (2, 2, 2)

    def test_unequal_block_sizes_rejected(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("t,a\n1,1.0\n1,2.0\n2,3.0\n")
        with pytest.raises(IngestError, match="expected 2"):
            ingest_matrix_csv(f)

    def test_non_increasing_block_index_rejected(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("t,a\n2,1.0\n1,2.0\n")
        with pytest.raises(IngestError) as info:
            ingest_matrix_csv(f)
        assert info.value.row == 3
        assert info.value.column == 1

    def test_needs_index_plus_data_columns(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("1\n2\n")
        with pytest.raises(IngestError, match="block index"):
            ingest_matrix_csv(f)


class TestSerialization:
    def test_loadings_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        loading = rng.standard_normal((9, 3))
        loading[0, 0] = 1e-300
        loading[1, 1] = -1.2345678901234567e300
        loading[2, 2] = 2.0 / 3.0
        f = tmp_path / "load.csv"
        write_loadings_csv(f, loading, [f"v{j}" for j in range(9)])
        back = read_loadings_csv(f)
        assert np.array_equal(back, loading)
        assert np.abs(back - loading).max() <= 1e-12

    def test_trace_kv_expands_arrays_and_roundtrips_floats(self, tmp_path):
        f = tmp_path / "trace.kv"
        write_trace_kv(
            f,
            [
                ("alpha", 0.1 + 0.2),
                ("count", 7),
                ("flag", True),
                ("name", "wauto"),
                ("ratio", np.array([1.5, 2.5])),
            ],
        )
        kv = read_kv(f)
        assert float(kv["alpha"]) == 0.1 + 0.2
        assert kv["count"] == "7"
        assert kv["flag"] == "true"
        assert kv["name"] == "wauto"
        assert float(kv["ratio_1"]) == 1.5 and float(kv["ratio_2"]) == 2.5


class TestCliEstimate:
    def test_artifacts_written_and_loadings_orthonormal(self, tmp_path, capsys):
        src = tmp_path / "panel.csv"
        write_panel_csv(src)
        out = tmp_path / "out"
        code = run([
            "estimate", str(src), "--out", str(out),
            "--method", "wauto", "--m", "2", "--q", "6",
        ])
        assert code == 0
        assert "r_hat=" in capsys.readouterr().out
        assert (out / "report.txt").exists()
        loading = read_loadings_csv(out / "result.csv")
        r = loading.shape[1]
        assert np.abs(loading.T @ loading - np.eye(r)).max() <= 1e-12
        kv = read_kv(out / "trace.kv")
        assert kv["command"] == "estimate"
        assert int(kv["r_hat"]) == r
        assert kv["q_used"] == "6"
        factors = np.loadtxt(out / "factors.csv", delimiter=",", skiprows=1)
        assert factors.reshape(90, -1).shape == (90, r)

    def test_rerun_is_byte_identical(self, tmp_path):
        src = tmp_path / "panel.csv"
        write_panel_csv(src)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["estimate", str(src), "--out", str(out), "--q", "6"]) == 0
            outs.append(out)
        for artifact in ("report.txt", "result.csv", "trace.kv", "factors.csv"):
            assert (outs[0] / artifact).read_bytes() == (outs[1] / artifact).read_bytes()

    def test_fixed_rank_and_no_demean_flags(self, tmp_path):
        raw = tmp_path / "raw.csv"
        write_panel_csv(raw, p=6, n=60)
        centered = tmp_path / "centered.csv"
        panel = ingest_csv(raw)
        with open(centered, "w") as fh:
            for row in panel.data:
                fh.write(",".join(fmt_float(v) for v in row) + "\n")
        out = tmp_path / "out"
        code = run([
            "estimate", str(centered), "--out", str(out),
            "--no-demean", "--method", "cov", "--r", "2",
        ])
        assert code == 0
        assert read_loadings_csv(out / "result.csv").shape == (6, 2)
        # uncentered input with --no-demean is rejected as invalid data
        assert run([
            "estimate", str(raw), "--out", str(out), "--no-demean",
        ]) == 4


class TestCliErrors:
    def test_ingest_errors_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n3,NA\n")
        assert run(["estimate", str(bad), "--out", str(tmp_path / "o")]) == 3
        assert "line 3, column 2" in capsys.readouterr().err
        assert run(["estimate", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 3

    def test_invalid_config_exits_5(self, tmp_path):
        src = tmp_path / "panel.csv"
        write_panel_csv(src, p=8, n=40)
        assert run(["estimate", str(src), "--out", str(tmp_path / "o"), "--q", "200"]) == 5

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as info:
            run(["estimate"])  # missing input path
        assert info.value.code == 2

    def test_unknown_config_key_exits_5(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus": 1}')
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 5

    def test_malformed_config_file_exits_5(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("not json")
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 5


class TestCliSimulate:
    ARGS = [
        "simulate", "--model", "uniform", "--p", "15", "--n", "80",
        "--delta0", "1", "--runs", "3", "--seed", "1",
    ]

    def test_thread_count_does_not_change_artifacts(self, tmp_path):
        outs = []
        for name, threads in (("t1", "1"), ("t3", "3")):
            out = tmp_path / name
            code = run(self.ARGS + ["--threads", threads, "--out", str(out)])
            assert code == 0
            outs.append(out)
        for artifact in ("report.txt", "result.csv", "trace.kv"):
            assert (outs[0] / artifact).read_bytes() == (outs[1] / artifact).read_bytes()

    def test_result_rows_cover_every_run_and_method(self, tmp_path):
        out = tmp_path / "out"
        assert run(self.ARGS + ["--out", str(out)]) == 0
        lines = (out / "result.csv").read_text().splitlines()
        assert lines[0] == "run,method,r_hat,distance,error"
        assert len(lines) == 1 + 3 * 3
        kv = read_kv(out / "trace.kv")
        assert kv["rng"] == "pcg64"
        assert kv["runs"] == "3"
        assert "freq_correct_wauto" in kv

    def test_config_file_fills_options_and_flags_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"p": 12, "n": 60, "runs": 2, "seed": 3, "method": "cov"}')
        out = tmp_path / "out"
        code = run([
            "simulate", "--config", str(cfg), "--p", "14", "--out", str(out),
        ])
        assert code == 0
        kv = read_kv(out / "trace.kv")
        assert kv["p"] == "14"  # flag beats config
        assert kv["n"] == "60"  # config beats default
        assert kv["seed"] == "3"
        assert "freq_correct_cov" in kv and "freq_correct_wauto" not in kv


class TestCliForecastAndSelectQ:
    def test_forecast_reports_method_and_zero_baseline(self, tmp_path):
        src = tmp_path / "panel.csv"
        write_panel_csv(src, p=6, n=110)
        out = tmp_path / "out"
        code = run([
            "forecast", str(src), "--out", str(out),
            "--method", "cov", "--h", "1", "--r", "1", "--n1", "90",
        ])
        assert code == 0
        lines = (out / "result.csv").read_text().splitlines()
        assert lines[0] == "method,mafe,msfe,failed"
        labels = [line.split(",")[0] for line in lines[1:]]
        assert labels == ["cov", "zero"]
        kv = read_kv(out / "trace.kv")
        assert kv["n1"] == "90" and kv["n2"] == "20"
        assert kv["standardize"] == "global"
        assert float(kv["msfe_cov"]) > 0

    def test_forecast_per_window_flag_switches_mode(self, tmp_path):
        src = tmp_path / "panel.csv"
        write_panel_csv(src, p=6, n=110)
        out = tmp_path / "out"
        code = run([
            "forecast", str(src), "--out", str(out), "--method", "cov",
            "--h", "1", "--r", "1", "--n1", "95", "--standardize-per-window",
        ])
        assert code == 0
        assert read_kv(out / "trace.kv")["standardize"] == "train"

    def test_select_q_artifacts_are_consistent(self, tmp_path):
        src = tmp_path / "panel.csv"
        write_panel_csv(src, p=12, n=150)
        out = tmp_path / "out"
        assert run(["select-q", str(src), "--out", str(out), "--q0", "8"]) == 0
        kv = read_kv(out / "trace.kv")
        q_hat = int(kv["q_hat"])
        candidates = sorted(
            int(v) for k, v in kv.items() if k.startswith("candidate_")
        )
        assert q_hat in candidates
        assert candidates[-1] == 8
        loading = read_loadings_csv(out / "result.csv")
        assert loading.shape == (12, int(kv["r_hat"]))


class TestCliMatrix:
    def test_matrix_estimate_writes_both_bases(self, tmp_path):
        src = tmp_path / "mat.csv"
        write_matrix_csv(src, n=60, p1=5, p2=4)
        out = tmp_path / "out"
        code = run([
            "matrix-estimate", str(src), "--out", str(out),
            "--d1", "2", "--d2", "1", "--q1", "4", "--q2", "3",
        ])
        assert code == 0
        rows = (out / "result.csv").read_text().splitlines()
        assert rows[0] == "side,row,col,value"
        r_cells = [r for r in rows[1:] if r.startswith("R,")]
        c_cells = [r for r in rows[1:] if r.startswith("C,")]
        assert len(r_cells) == 5 * 2
        assert len(c_cells) == 4 * 1
        kv = read_kv(out / "trace.kv")
        assert kv["d1"] == "2" and kv["d2"] == "1"
        assert float(kv["row_spectrum_1"]) >= float(kv["row_spectrum_2"])


def test_console_script_runs_end_to_end(tmp_path):
    exe = shutil.which("tsfactor")
    assert exe is not None, "console script should be installed with the package"
    out = tmp_path / "out"
    proc = subprocess.run(
        [
            exe, "simulate", "--model", "uniform", "--p", "15", "--n", "60",
            "--delta0", "1", "--runs", "2", "--seed", "4", "--method", "cov",
            "--out", str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "monte carlo study" in proc.stdout
    assert (out / "trace.kv").exists()
