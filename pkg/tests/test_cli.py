import json

import pytest

from pwmbif.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(text):
    return dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)


def test_presets_list(capsys):
    code, out, _ = run(capsys, "presets", "list")
    assert code == EXIT_OK
    assert out.split() == ["pd_buck", "sn_buck", "ns_buck"]


def test_presets_show_values(capsys):
    code, out, _ = run(capsys, "presets", "show", "pd_buck")
    assert code == EXIT_OK
    assert "400e-06" in out or "0.0004" in out
    assert "8.2" in out and "3.8" in out


def test_export_then_load(capsys, tmp_path):
    code, out, _ = run(capsys, "presets", "export", "ns_buck", "--explicit")
    assert code == EXIT_OK
    path = tmp_path / "ns.json"
    path.write_text(out)
    code, a, _ = run(capsys, "orbit", "--config", str(path), "--set", "vs=30")
    code2, b, _ = run(capsys, "orbit", "--preset", "ns_buck", "--set", "vs=30")
    assert code == code2 == EXIT_OK
    assert report(a)["x0"] == report(b)["x0"]
    assert report(a)["eigenvalues"] == report(b)["eigenvalues"]


def test_orbit_report(capsys):
    code, out, _ = run(capsys, "orbit", "--preset", "ns_buck", "--set", "vs=30")
    r = report(out)
    assert code == EXIT_OK
    assert r["classification"] == "stable"
    assert float(r["closed_form_vs_fd_max_rel_diff"]) < 1e-5


def test_saturated_discrete_orbit(capsys):
    code, out, _ = run(capsys, "orbit", "--preset", "sn_buck", "--set", "vs=21")
    assert code == EXIT_OK
    assert report(out)["interior_orbit"] == "none"


def test_orbit_with_duty_guess(capsys):
    code, out, _ = run(capsys, "orbit", "--preset", "sn_buck", "--set", "vs=19.9",
                       "--guess", "duty=0.8")
    assert code == EXIT_OK
    r = report(out)
    assert abs(float(r["duty_on"].strip("[]")) - 0.79) < 0.01
    assert r["classification"] == "unstable"


def test_eigs_matrix(capsys):
    code, out, _ = run(capsys, "eigs", "--preset", "pd_buck", "--set", "vs=20", "--matrix")
    assert code == EXIT_OK
    assert "phi" in out


def test_locate_pd(capsys):
    code, out, _ = run(capsys, "locate", "--preset", "pd_buck", "--kind", "pd",
                       "--bracket", "24", "25")
    assert code == EXIT_OK
    assert abs(float(report(out)["vs"]) - 24.5) < 0.05


def test_locate_without_crossing_is_numeric_failure(capsys):
    code, _, err = run(capsys, "locate", "--preset", "pd_buck", "--kind", "pd",
                       "--bracket", "15", "20")
    assert code in (EXIT_NUMERIC, EXIT_USAGE)
    assert err


def test_averaged_disagreement_warning(capsys):
    code, out, _ = run(capsys, "averaged", "--preset", "pd_buck", "--set", "vs=26")
    assert code == EXIT_OK
    assert "warning:" in out
    assert report(out)["averaged_verdict"] == "stable"


def test_sweep_csv_is_deterministic(capsys, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.csv"
        code, _, _ = run(capsys, "sweep", "--preset", "ns_buck", "--from", "30", "--to", "40",
                         "--steps", "5", "--out", str(path))
        assert code == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0].startswith(b"vs,re_lambda1")


def test_simulate_to_stdout_keeps_report_off_stdout(capsys):
    code, out, err = run(capsys, "simulate", "--preset", "pd_buck", "--cycles", "2",
                         "--samples-per-cycle", "4")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "t_seconds,x1,x2,v_o_volts,stage"
    assert len(lines) == 1 + 8
    assert "command:" in err


def test_simulate_rejects_zero_cycles_without_writing(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, _, _ = run(capsys, "simulate", "--preset", "pd_buck", "--cycles", "0",
                     "--out", str(path))
    assert code == EXIT_USAGE
    assert not path.exists()


def test_bifdiag_writes_csv(capsys, tmp_path):
    path = tmp_path / "bd.csv"
    code, _, _ = run(capsys, "bifdiag", "--preset", "pd_buck", "--from", "24", "--to", "26",
                     "--steps", "3", "--burn-in", "50", "--record", "4", "--inherit", "up",
                     "--out", str(path))
    assert code == EXIT_OK
    lines = path.read_text().splitlines()
    assert lines[0] == "vs,sample_index,v_o_volts"
    assert len(lines) == 1 + 3 * 4


def test_bad_usage_exit_codes(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["orbit"])
    assert exc.value.code == EXIT_USAGE
    code, _, _ = run(capsys, "orbit", "--preset", "pd_buck", "--set", "Lx=1")
    assert code == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "preset": "pd_buck", "extra": 1}))
    code, _, _ = run(capsys, "orbit", "--config", str(bad))
    assert code == EXIT_USAGE


def test_io_failures(capsys, tmp_path):
    code, _, _ = run(capsys, "orbit", "--config", str(tmp_path / "missing.json"))
    assert code == EXIT_IO
    code, _, _ = run(capsys, "simulate", "--preset", "pd_buck", "--cycles", "1",
                     "--out", str(tmp_path / "no" / "dir.csv"))
    assert code == EXIT_IO


def test_simulate_without_averaged_point_starts_on_orbit(capsys):
    code, out, err = run(capsys, "simulate", "--preset", "sn_buck", "--set", "vs=20.5",
                         "--cycles", "1", "--samples-per-cycle", "2")
    assert code == EXIT_OK
    assert report(err)["x0_source"].startswith("orbit")
