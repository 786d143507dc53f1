import json

import numpy as np
import pytest

from sandlab import cli


def _run(argv):
    return cli.main([str(a) for a in argv])


def test_solve_densities_csv_and_report(tmp_path, capsys):
    out = tmp_path / "roots.csv"
    code = _run(["solve-densities", "--f-r", "0.75", "--seed", "1", "--out", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert "rho_transition" in printed and "0.556334" in printed
    body = out.read_text().splitlines()
    assert body[0] == "quantity,value"
    values = dict(line.split(",") for line in body[1:])
    assert float(values["rho_stationary"]) == pytest.approx(0.625)
    assert float(values["rho_transition"]) == pytest.approx(0.556333631315652, abs=1e-9)
    manifest = json.loads((tmp_path / "roots.csv.manifest.json").read_text())
    assert manifest["command"] == "solve-densities"
    assert manifest["seed_source"] == "given"
    assert manifest["outputs"][0]["rows"] == len(body) - 1


def test_drive_classical_density(tmp_path):
    out = tmp_path / "drive.csv"
    code = _run(
        ["drive", "--env", "all-s", "--n", "20", "--sample", "8000",
         "--trials", "2", "--stride", "400", "--seed", "7", "--out", out]
    )
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "trial,t,occupied_fraction"
    occ = [float(r.split(",")[2]) for r in rows[1:]]
    assert abs(np.mean(occ[len(occ) // 2 :]) - 21 / 22) < 0.01


def test_same_spec_reruns_identically(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["staircase", "--env", "all-s", "--n", "100", "--rho-grid", "0.5,1.5,2.5",
            "--trials", "3", "--seed", "11", "--out"]
    assert _run(argv + [a]) == 0
    assert _run(argv + [b]) == 0
    assert a.read_bytes() == b.read_bytes()
    ma = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.csv.manifest.json").read_text())
    assert ma["spec_hash"] == mb["spec_hash"]
    assert ma["outputs"][0]["sha256"] == mb["outputs"][0]["sha256"]


def test_staircase_row_count_and_svg(tmp_path):
    out = tmp_path / "stairs.csv"
    svg = tmp_path / "stairs.svg"
    code = _run(
        ["staircase", "--env", "all-s", "--n", "200", "--rho-grid", "0.2:2.8:50",
         "--trials", "10", "--seed", "3", "--out", out, "--svg", svg]
    )
    assert code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 1 + 50 * 10  # header plus one row per (rho, trial)
    text = svg.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<circle") == 50


def test_threshold_report(tmp_path, capsys):
    out = tmp_path / "thr.csv"
    code = _run(
        ["threshold", "--env", "all-s", "--n", "120", "--bracket", "0.5:1.5",
         "--rho-tol", "0.02", "--trials", "20", "--seed", "1", "--out", out]
    )
    assert code == 0
    report = capsys.readouterr().out
    value = float(report.split("threshold estimate")[1].split()[0])
    assert abs(value - 1.0) < 0.08


def test_missing_seed_autogenerates(tmp_path):
    out = tmp_path / "auto.csv"
    code = _run(["solve-densities", "--f-r", "0.6", "--out", out])
    assert code == 0
    manifest = json.loads((tmp_path / "auto.csv.manifest.json").read_text())
    assert manifest["seed_source"] == "auto"
    assert 0 <= manifest["seed"] < cli.MAX_SEED


def test_rejects_unknown_option():
    with pytest.raises(SystemExit):
        cli.parse_args(["drive", "--bogus", "1"])


def test_rejects_out_of_range_values(tmp_path, capsys):
    code = _run(["drive", "--env", "restricted:0.5", "--n", "20",
                 "--out", tmp_path / "x.csv"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_window_requires_known_boundary(tmp_path, capsys):
    code = _run(["window", "--env", "all-s", "--n", "100", "--rho", "1.5",
                 "--t-max", "50", "--boundary", "open", "--out", tmp_path / "w.csv"])
    assert code == 1


def test_urn_subcommand(tmp_path):
    out = tmp_path / "urn.csv"
    code = _run(["urn", "--n", "500", "--rho", "0.3", "--trials", "4",
                 "--seed", "9", "--out", out])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("trial,stopped")
    assert len(rows) == 5
    stopped = [r.split(",")[1] for r in rows[1:]]
    assert set(stopped) == {"1"}


def test_config_file_run_matches_flags(tmp_path):
    flag_out = tmp_path / "flags.csv"
    _run(["solve-densities", "--f-r", "0.75", "--variant", "corrected",
          "--seed", "5", "--out", flag_out])
    cfg_out = tmp_path / "cfg.csv"
    cfg = tmp_path / "exp.ini"
    cfg.write_text(
        "[experiment]\n"
        "command = solve-densities\n"
        f"out = {cfg_out}\n"
        "seed = 5\n"
        "\n"
        "[params]\n"
        "f-r = 0.75\n"
        "variant = corrected\n"
    )
    assert _run(["run", cfg]) == 0
    assert flag_out.read_bytes() == cfg_out.read_bytes()


def test_config_file_errors_carry_line_numbers(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(
        "[experiment]\n"
        "command = drive\n"
        "\n"
        "[params]\n"
        "env = all-s\n"
        "bogus = 3\n"
    )
    assert _run(["run", cfg]) == 1
    err = capsys.readouterr().err
    assert "line 6" in err
    assert "bogus" in err

    cfg.write_text("[experiment]\ncommand = drive\nno_equals_here\n")
    assert _run(["run", cfg]) == 1
    assert "line 3" in capsys.readouterr().err

    cfg.write_text("[mystery]\nx = 1\n")
    assert _run(["run", cfg]) == 1
    assert "line 1" in capsys.readouterr().err


def test_config_file_duplicate_key(tmp_path, capsys):
    cfg = tmp_path / "dup.ini"
    cfg.write_text(
        "[experiment]\n"
        "command = solve-densities\n"
        "\n"
        "[params]\n"
        "f-r = 0.7\n"
        "f-r = 0.8\n"
    )
    assert _run(["run", cfg]) == 1
    err = capsys.readouterr().err
    assert "line 6" in err


def test_thread_cap_env(tmp_path, monkeypatch):
    base = tmp_path / "seq.csv"
    argv = ["staircase", "--env", "all-s", "--n", "80", "--rho-grid", "0.5,2.5",
            "--trials", "2", "--seed", "4", "--out"]
    assert _run(argv + [base]) == 0
    monkeypatch.setenv("SANDPILE_THREADS", "4")
    threaded = tmp_path / "par.csv"
    assert _run(argv + [threaded]) == 0
    assert base.read_bytes() == threaded.read_bytes()

    monkeypatch.setenv("SANDPILE_THREADS", "banana")
    assert _run(argv + [tmp_path / "z.csv"]) == 1


def test_spec_hash_ignores_out_path(tmp_path):
    raw = {"f-r": ("0.75", None)}
    a = cli.build_spec("solve-densities", dict(raw), seed=("3", None),
                       out=str(tmp_path / "one.csv"), svg=None)
    b = cli.build_spec("solve-densities", dict(raw), seed=("3", None),
                       out=str(tmp_path / "two.csv"), svg=None)
    assert a.spec_hash() == b.spec_hash()


def test_fixed_energy_subcommand(tmp_path, capsys):
    out = tmp_path / "fe.csv"
    code = _run(["fixed-energy", "--env", "all-s", "--n", "50", "--rho", "0.5",
                 "--trials", "5", "--seed", "2", "--out", out])
    assert code == 0
    assert "stabilized=5" in capsys.readouterr().out
    rows = out.read_text().splitlines()
    assert len(rows) == 6
    assert rows[0].split(",")[:3] == ["trial", "outcome", "steps"]
