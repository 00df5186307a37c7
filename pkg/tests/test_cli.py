import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from quadcptp import cli
from quadcptp.dynamics import gibbs_covariance
from quadcptp.model import harmonic_hessian

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TUNED = str(CONFIGS / "tuned_harmonic.json")
KRAMERS = str(CONFIGS / "kramers_harmonic.json")
NETWORK = str(CONFIGS / "network_fig1a.json")
CL = str(CONFIGS / "caldeira_leggett.json")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_config(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(p)


def zero_coupling_network():
    cfg = json.loads(Path(NETWORK).read_text())
    for b in cfg["baths"]:
        b["gamma_q"] = b["gamma_p"] = 0.0
    return cfg


def read_csv(text):
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(rows))))


# ------------------------------------------------------------------ check


def test_check_tuned_exit_zero(capsys):
    code, out, _ = run(capsys, "check", "--config", TUNED)
    assert code == 0
    rep = json.loads(out)
    assert rep["verdict"] == "CPTP"
    assert rep["xi_a_norm"] <= 1e-12
    assert rep["eigenvalues"] == sorted(rep["eigenvalues"])
    assert set(rep["xi_h"]) == {"re", "im"}
    assert rep["meta"]["convention"] == "appendix-b"


def test_check_kramers_exit_one(capsys):
    code, out, _ = run(capsys, "check", "--config", KRAMERS)
    assert code == 1
    assert json.loads(out)["min_eigenvalue"] < 0


def test_check_zero_coupling_is_marginal(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "--config", write_config(tmp_path, zero_coupling_network()))
    assert code == 3
    assert json.loads(out)["eigenvalues"] == [0.0] * 4


def test_check_malformed_json_exit_two(capsys, tmp_path):
    path = write_config(tmp_path, '{"n": 1,\n  "hessian": [[1, 0], [0, 1]]\n  "baths": []}')
    code, out, err = run(capsys, "check", "--config", path)
    assert code == 2 and out == ""
    assert "line 3" in err and "column" in err


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda c: c.pop("hessian"), "hessian"),
        (lambda c: c["baths"][0].update(gamma_p=-1.0), "gamma"),
        (lambda c: c.update(n=2), "hessian"),
        (lambda c: c["baths"][0].pop("beta"), "baths[0]"),
    ],
)
def test_check_schema_violation_names_field(capsys, tmp_path, mutate, field):
    cfg = json.loads(Path(TUNED).read_text())
    mutate(cfg)
    code, _, err = run(capsys, "check", "--config", write_config(tmp_path, cfg))
    assert code == 2
    assert "config error" in err and field in err


def test_missing_config_exit_two(capsys, tmp_path):
    assert run(capsys, "check")[0] == 2
    assert run(capsys, "check", "--config", str(tmp_path / "absent.json"))[0] == 2


def test_convention_flag_does_not_change_verdict(capsys):
    a = json.loads(run(capsys, "check", "--config", NETWORK, "--no-meta")[1])
    b = json.loads(run(capsys, "check", "--config", NETWORK, "--no-meta", "--convention", "main-text")[1])
    assert a["verdict"] == b["verdict"]
    np.testing.assert_allclose(a["eigenvalues"], b["eigenvalues"], atol=1e-12)
    assert b["meta"]["convention"] == "main-text"


def test_bad_global_flags_exit_two(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["check", "--config", TUNED, "--jobs", "0"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["check", "--config", TUNED, "--tol", "-1"])
    assert e.value.code == 2


# ------------------------------------------------------------------ determinism


@pytest.mark.parametrize("command", ["check", "lindblad", "balance"])
def test_json_is_deterministic_without_meta(capsys, command):
    a = run(capsys, command, "--config", NETWORK, "--no-meta")[1]
    b = run(capsys, command, "--config", NETWORK, "--no-meta")[1]
    assert a == b
    assert "generated" not in json.loads(a)["meta"]
    assert "generated" in json.loads(run(capsys, command, "--config", NETWORK)[1])["meta"]


def test_out_flag_writes_file(capsys, tmp_path):
    target = tmp_path / "r.json"
    code, out, _ = run(capsys, "check", "--config", TUNED, "--out", str(target), "--no-meta")
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["verdict"] == "CPTP"


def test_unwritable_output_exit_two(capsys, tmp_path):
    target = tmp_path / "missing_dir" / "x.csv"
    code, _, err = run(capsys, "scan", "--config", NETWORK, "--grid", "0.1:1:2,0.1:1:2", "--out", str(target))
    assert code == 2 and "cannot write" in err


# ------------------------------------------------------------------ scan


@pytest.mark.parametrize(
    "text",
    ["0.1:1:1,0.1:1:3", "0:1:3,0.1:1:3", "0.1:1:3", "a:b:c,locked", "0.1:1,0.1:1:3", "1:0.5:3,locked", "-1:1:3,locked"],
)
def test_bad_grid_rejected(text):
    with pytest.raises(cli.UsageError):
        cli.parse_grid(text)


def test_grid_row_major():
    g = cli.parse_grid("1:2:2,3:5:3")
    np.testing.assert_array_equal(g.points(), [[1, 3], [1, 4], [1, 5], [2, 3], [2, 4], [2, 5]])
    assert cli.parse_grid("0.5:1:2,LOCKED").locked


def test_scan_columns_and_header(capsys):
    code, out, _ = run(capsys, "scan", "--config", NETWORK, "--grid", "0.2:2:3,0.5:1.5:2", "--no-meta")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config: {") and lines[1] == "# convention: appendix-b"
    rows = read_csv(out)
    assert list(rows[0]) == ["beta1", "beta2", "eig_1", "eig_2", "eig_3", "eig_4", "verdict"]
    assert len(rows) == 6
    for r in rows:
        ev = [float(r[f"eig_{k}"]) for k in range(1, 5)]
        assert ev == sorted(ev)


def test_scan_single_bath_needs_locked(capsys):
    assert run(capsys, "scan", "--config", TUNED, "--grid", "0.1:1:3,0.1:1:3")[0] == 2
    code, out, _ = run(capsys, "scan", "--config", TUNED, "--grid", "0.1:3:5,locked")
    assert code == 0
    assert {r["verdict"] for r in read_csv(out)} == {"CPTP"}


def test_scan_matches_check_pointwise(capsys, tmp_path):
    _, out, _ = run(capsys, "scan", "--config", NETWORK, "--grid", "0.4:1.6:3,0.7:2.1:2", "--no-meta")
    cfg = json.loads(Path(NETWORK).read_text())
    for r in read_csv(out):
        cfg["baths"][0]["beta"] = float(r["beta1"])
        cfg["baths"][1]["beta"] = float(r["beta2"])
        rep = json.loads(run(capsys, "check", "--config", write_config(tmp_path, cfg))[1])
        ev = [float(r[f"eig_{k}"]) for k in range(1, 5)]
        np.testing.assert_allclose(ev, rep["eigenvalues"], atol=1e-12)
        assert r["verdict"] == rep["verdict"]


def test_scan_jobs_invariant(capsys):
    grid = "0.05:3:12,0.05:3:11"
    one = run(capsys, "scan", "--config", NETWORK, "--grid", grid, "--no-meta", "--jobs", "1")[1]
    two = run(capsys, "scan", "--config", NETWORK, "--grid", grid, "--no-meta", "--jobs", "3")[1]
    assert one == two


def test_scan_zero_coupling_marginal_everywhere(capsys, tmp_path):
    path = write_config(tmp_path, zero_coupling_network())
    _, out, _ = run(capsys, "scan", "--config", path, "--grid", "0.1:3:4,0.1:3:4")
    rows = read_csv(out)
    assert {r["verdict"] for r in rows} == {"Marginal"}
    assert all(float(r[f"eig_{k}"]) == 0 for r in rows for k in range(1, 5))


def test_scan_fig1a_diagonal_cptp_from_small_beta(capsys):
    _, out, _ = run(capsys, "scan", "--config", NETWORK, "--grid", "0.001:4:60,locked")
    verdicts = [r["verdict"] for r in read_csv(out)]
    assert verdicts[0] == "CPTP"
    # the CPTP set on the diagonal is an interval starting at the small-beta end
    first_other = next((k for k, v in enumerate(verdicts) if v != "CPTP"), len(verdicts))
    assert first_other >= 2
    assert all(v == "CPTP" for v in verdicts[:first_other])


def test_scan_figure(capsys, tmp_path):
    fig = tmp_path / "scan.png"
    code, _, _ = run(capsys, "scan", "--config", NETWORK, "--grid", "0.1:2:5,0.1:2:5", "--figure", str(fig))
    assert code == 0 and fig.stat().st_size > 0
    fig2 = tmp_path / "diag.png"
    run(capsys, "scan", "--config", NETWORK, "--grid", "0.1:2:5,locked", "--figure", str(fig2))
    assert fig2.stat().st_size > 0


# ------------------------------------------------------------------ evolve


def test_evolve_reaches_gibbs(capsys):
    code, out, _ = run(capsys, "evolve", "--config", TUNED, "--mean", "1,-0.5", "--cov-scale", "3", "--no-meta")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 201
    last = rows[-1]
    c12 = float(last["cov_12"])
    cov = np.array([[float(last["cov_11"]), c12], [c12, float(last["cov_22"])]])
    np.testing.assert_allclose(cov, gibbs_covariance(harmonic_hessian(1, 1), 2.0, 1.0), atol=1e-6)
    np.testing.assert_allclose(cov, 0.5 / np.tanh(1.0) * np.eye(2), atol=1e-6)


def test_evolve_options(capsys, tmp_path):
    fig = tmp_path / "traj.png"
    code, out, _ = run(capsys, "evolve", "--config", NETWORK, "--t-final", "2", "--points", "5",
                       "--figure", str(fig))
    assert code == 0 and fig.stat().st_size > 0
    rows = read_csv(out)
    assert [float(r["t"]) for r in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert run(capsys, "evolve", "--config", TUNED, "--mean", "1")[0] == 2
    assert run(capsys, "evolve", "--config", TUNED, "--t-final", "-1")[0] == 2


# ------------------------------------------------------------------ lindblad, balance, oracle


def test_lindblad_tuned_norm_ratio(capsys):
    code, out, _ = run(capsys, "lindblad", "--config", TUNED)
    assert code == 0
    rep = json.loads(out)
    assert rep["rank"] == 2 and rep["signs"] == [1, 1]
    beta = 2.0
    nbar = 1 / np.expm1(beta)
    norms = sorted(rep["norms"])
    assert norms[1] / norms[0] == pytest.approx(np.sqrt((nbar + 1) / nbar), rel=1e-10)
    assert rep["reconstruction_residual"] <= 1e-12
    np.testing.assert_allclose(rep["h_eff"]["kernel"], np.eye(2), atol=1e-12)


def test_lindblad_kramers_has_negative_sign(capsys):
    code, out, _ = run(capsys, "lindblad", "--config", KRAMERS)
    assert code == 1
    assert -1 in json.loads(out)["signs"]


def test_balance_caldeira_leggett_commutes_nonzero(capsys):
    code, out, _ = run(capsys, "balance", "--config", CL)
    assert code == 0
    rep = json.loads(out)
    assert rep["commutes"] > 1e-3 and rep["xi_a_norm"] > 1e-3


def test_balance_tuned_residuals_small(capsys):
    rep = json.loads(run(capsys, "balance", "--config", TUNED)[1])
    for key in ("commutes", "inv_xi_h", "inv_xi", "inv_xi_a", "pairing_residual", "necessary_residual"):
        assert 0 <= rep[key] <= 1e-10


def test_balance_non_uniform_exit_two(capsys, tmp_path):
    cfg = json.loads(Path(NETWORK).read_text())
    cfg["baths"][1]["beta"] = 2.0
    code, _, err = run(capsys, "balance", "--config", write_config(tmp_path, cfg))
    assert code == 2 and "NonUniformTemperature" in err


def test_oracle_tuned_report(capsys):
    code, out, _ = run(capsys, "oracle", "--config", TUNED, "--N", "16", "--source", "qtcl",
                       "--t-final", "1", "--points", "3", "--mean", "0.3,0")
    assert code == 0
    rep = json.loads(out)
    assert rep["meta"]["config"]["n"] == 1
    assert rep["source"] == "QTCL" and rep["N"] == 16
    assert len(rep["moment_series"]) == 3
    assert rep["trace_drift"] <= 1e-10 and rep["min_rho_eigenvalue"] >= -1e-10


def test_oracle_rejects_huge_truncation(capsys):
    code, _, err = run(capsys, "oracle", "--config", NETWORK, "--N", "80")
    assert code == 2 and "BudgetExceeded" in err


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.startswith("quadcptp ")
