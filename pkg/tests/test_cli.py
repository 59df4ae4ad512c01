import csv
import json

import numpy as np
import pytest

from decoherence_sim import cli
from decoherence_sim.cli import ConfigError, main, parse_config, run_experiment

QUICK_DEPHASING = ["--preset", "fig2", "--n-traj", "200", "--t-final", "2"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def error_payload(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert line.startswith("error: ")
    return json.loads(line[len("error: "):])


def test_preset_values():
    cfg = parse_config("dephasing-compare", preset="fig2")
    assert (cfg["lam"], cfg["beta"], cfg["omega_c"], cfg["omega0"]) == (0.5, 1.0, 1.0, 1.0)
    assert (cfg["n_traj"], cfg["dt"], cfg["t_final"]) == (2000, 0.002, 10.0)
    assert cfg["high_temperature"] is True


def test_missing_key_is_named(tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    with pytest.raises(ConfigError) as err:
        parse_config("dephasing-compare", config_file=empty)
    assert err.value.key == "lam"


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nn_traj = 500\nlam = 0.5\n")
    cfg = parse_config("dephasing-compare", config_file=path, preset="fig2",
                       overrides={"n_traj": "2000"})
    assert cfg["n_traj"] == 2000


@pytest.mark.parametrize("text,key", [
    ("bogus = 1\n", "bogus"),
    ("n_traj = many\n", "n_traj"),
    ("beta = -1\n", "beta"),
    ("high_temperature = maybe\n", "high_temperature"),
    ("experiment = qdf-exact\n", "experiment"),
])
def test_bad_values_name_the_key(tmp_path, text, key):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError) as err:
        parse_config("dephasing-compare", config_file=path, preset="fig2")
    assert err.value.key == key


def test_cli_reports_config_error(capsys, tmp_path):
    assert main(["dephasing-compare", "--output-path", str(tmp_path / "x.csv")]) == 2
    payload = error_payload(capsys)
    assert payload["status"] == "error" and payload["key"] == "lam"
    assert not list(tmp_path.iterdir())


def test_qdf_exact_first_row(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["qdf-exact", "--preset", "fig2", "--t-final", "1",
                 "--output-path", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "kappa", "phi_re", "phi_im"]
    assert rows[0] == ["0.0", "0.0", "1.0", "0.0"]
    assert float(rows[-1][1]) == pytest.approx(8 / np.e, rel=1e-9)


def test_csv_uses_round_trip_floats(tmp_path):
    out = tmp_path / "q.csv"
    cfg = parse_config("qdf-exact", preset="fig2", overrides={
        "t_final": "0.5", "dt": "0.1", "output_path": str(out)})
    run_experiment(cfg)
    _, rows = read_csv(out)
    for row in rows:
        for cell in row:
            assert repr(float(cell)) == cell


def test_dephasing_compare_columns_and_determinism(tmp_path):
    a, b, c = (tmp_path / f"{n}.csv" for n in "abc")
    assert main(["dephasing-compare", *QUICK_DEPHASING, "--output-path", str(a)]) == 0
    assert main(["dephasing-compare", *QUICK_DEPHASING, "--output-path", str(b)]) == 0
    assert main(["dephasing-compare", *QUICK_DEPHASING, "--n-jobs", "4",
                 "--output-path", str(c)]) == 0
    header, rows = read_csv(a)
    assert header == ["t", "phi_noise_re", "phi_noise_im", "stderr", "phi_exact", "purity"]
    assert rows[0][1] == "1.0" and rows[0][4] == "1.0"
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_manifest_replays_run(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dephasing-compare", *QUICK_DEPHASING, "--master-seed", "12",
                 "--output-path", str(out)]) == 0
    manifest = tmp_path / "d.csv.manifest"
    text = manifest.read_text()
    assert "[manifest]" in text and "wall_time_s" in text and "master_seed = 12" in text
    replay = tmp_path / "replay.csv"
    assert main(["dephasing-compare", "--config", str(manifest),
                 "--output-path", str(replay)]) == 0
    assert replay.read_bytes() == out.read_bytes()


def test_env_var_sets_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "runs"))
    assert main(["noise-validate", "--lam", "0.5", "--beta", "1", "--omega-c", "1",
                 "--dt", "0.1", "--t-final", "500", "--master-seed", "1",
                 "--max-lag", "20"]) == 0
    out = tmp_path / "runs" / "noise-validate.csv"
    header, rows = read_csv(out)
    assert header == ["lag", "empirical", "target", "stderr"]
    assert len(rows) == 21 and float(rows[0][2]) == pytest.approx(1.0)


def test_failure_leaves_no_partial_output(tmp_path, capsys):
    out = tmp_path / "o.csv"
    out.write_text("previous\n")
    code = main(["oracle-check", "--mode-frequencies", "1.0", "--mode-couplings", "0.3",
                 "--beta", "0.5", "--dt", "0.1", "--t-final", "1", "--fock-cutoff", "3",
                 "--output-path", str(out)])
    assert code == 1
    assert error_payload(capsys)["kind"] == "ValidationError"
    assert out.read_text() == "previous\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["o.csv"]


def test_oracle_check(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle-check", "--mode-frequencies", "1.0, 2.0",
                 "--mode-couplings", "0.3, 0.2", "--beta", "1.0", "--dt", "0.1",
                 "--t-final", "10", "--output-path", str(out)]) == 0
    header, rows = read_csv(out)
    assert header[-1] == "abs_diff"
    assert max(float(r[-1]) for r in rows) < 1e-5


def test_mismatched_mode_lists(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config("oracle-check", overrides={
            "mode_frequencies": "1, 2", "mode_couplings": "0.1", "beta": "1",
            "dt": "0.1", "t_final": "1"})
    assert err.value.key == "mode_couplings"


def test_dissipation_compare_outputs(tmp_path):
    out = tmp_path / "diss.csv"
    assert main(["dissipation-compare", "--omega0", "1", "--gamma-a", "0.2",
                 "--gamma-0", "0.1", "--dt", "0.02", "--t-final", "20",
                 "--n-traj", "1000", "--master-seed", "3", "--output-path", str(out)]) == 0
    header, _ = read_csv(out)
    assert header[0] == "t" and "quantum_rho_ee" in header and "classical_purity" in header
    for name in ("lindblad", "noise_me", "ensemble"):
        h, _ = read_csv(tmp_path / f"diss_{name}.csv")
        assert h == ["t", "rho_gg", "rho_ee", "rho_eg_re", "rho_eg_im", "purity"]
    _, rates = read_csv(tmp_path / "diss_rates.csv")
    values = {name: float(v) for name, v, _ in rates}
    assert values["quantum_decay_rate"] == pytest.approx(0.25, abs=1e-3)
    assert values["expected_rate_gap"] == 0.05


def test_tabulated_density_from_csv(tmp_path):
    table = tmp_path / "j.csv"
    w = np.linspace(0.01, 40, 4000)
    table.write_text("omega,J\n" + "".join(
        f"{x!r},{2 * 0.5 * x / (x * x + 1)!r}\n" for x in map(float, w)))
    out = tmp_path / "q.csv"
    assert main(["qdf-exact", "--beta", "1", "--spectral-csv", str(table), "--dt", "0.5",
                 "--t-final", "2", "--output-path", str(out)]) == 0
    _, rows = read_csv(out)
    assert float(rows[0][2]) == 1.0 and 0 < float(rows[-1][2]) < 1


def test_malformed_table_is_reported(tmp_path, capsys):
    table = tmp_path / "j.csv"
    table.write_text("omega,J\n1.0,0.5\n2.0\n")
    assert main(["qdf-exact", "--beta", "1", "--spectral-csv", str(table), "--dt", "0.5",
                 "--t-final", "2", "--output-path", str(tmp_path / "q.csv")]) == 1
    assert ":3:" in error_payload(capsys)["message"]
