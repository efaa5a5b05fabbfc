import json

import numpy as np
import pytest

from contagion_reinsurance import PolicyTable, PremiumPrinciple, RetentionContract, cox_optimal
from contagion_reinsurance import cli
from contagion_reinsurance.errors import NumericalError

from conftest import U01, contagion_params

POISSON = """
[model]
alpha = 1
beta = 2
lambda0 = 2
rho = 0
r = 0
eta = 1
horizon = 10
claim_dist = uniform 0 1
ext_dist = point_mass 0
self_excitation = zero

[contract]
kind = proportional

[premium]
kind = evp
theta_i = 0.2
theta_r = 0.5

[grids]
t_points = 3
lambda_min = 2
lambda_max = 3
lambda_points = 2
n_paths = 200
seed = 1

[run]
simulate_paths = 800
dump_paths = 2
"""

CONTAGION = """
[model]
alpha = 2
beta = 1
lambda0 = 1
rho = 0.5
r = 0
eta = 1
horizon = 1
claim_dist = uniform 0 1
ext_dist = uniform 0 1
self_excitation = linear 1

[contract]
kind = {kind}
beta_m = 0.5

[premium]
kind = evp
theta_i = 0.1
theta_r = 0.5

[grids]
t_points = 4
lambda_min = 1
lambda_max = 4
lambda_points = 4
n_paths = 4000
seed = 3

[run]
probe_paths = 4000
probe_points = 3
"""


def _write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_simulate_reports_time_change_test(tmp_path):
    cfg = _write(tmp_path, POISSON)
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    s = _summary(out)
    assert s["n_claims"] > 10000 and s["ks_pvalue"] > 0.01
    dumps = sorted(out.glob("path_*.csv"))
    assert len(dumps) == 2
    assert dumps[0].read_text().startswith(f"# config_sha256={s['config_sha256']} seed=1 command=simulate")


def test_optimize_cox_config(tmp_path):
    text = CONTAGION.format(kind="limited_xl").replace("linear 1", "zero")
    out = tmp_path / "opt"
    assert cli.run("optimize", _write(tmp_path, text), out, workers=1) == 0
    tab = PolicyTable.read_csv(out / "policy.csv", RetentionContract.limited_xl(0.5, U01))
    p = contagion_params().cox_twin()
    pr = PremiumPrinciple.evp(0.1, 0.5)
    expected = [cox_optimal(t, tab.contract, pr, p) for t in tab.t_grid]
    np.testing.assert_allclose(tab.u, np.repeat(np.array(expected)[:, None], 4, axis=1), atol=1e-10)
    assert (out / "phi.csv").exists() and (out / "diagnostics.jsonl").exists()
    assert _summary(out)["converged"] is True


@pytest.mark.parametrize("kind", ["proportional", "limited_xl"])
def test_compare_contagion(tmp_path, kind):
    out = tmp_path / kind
    assert cli.run("compare", _write(tmp_path, CONTAGION.format(kind=kind)), out, workers=1) == 0
    s = _summary(out)
    assert s["violations"] == 0
    assert s["precondition"] in ("verified-strana", "verified-coupled")
    header = (out / "comparison.csv").read_text().splitlines()[1]
    assert header == "t,lambda,u_star,u_cox,violation"


def test_phi_and_check(tmp_path):
    cfg = _write(tmp_path, CONTAGION.format(kind="proportional"))
    assert cli.run("phi", cfg, tmp_path / "phi", workers=1) == 0
    lines = (tmp_path / "phi" / "phi.csv").read_text().splitlines()
    assert lines[1] == "t,lambda,phi,stderr" and len(lines) == 2 + 16
    assert cli.run("check", cfg, tmp_path / "chk", workers=1) == 0
    s = _summary(tmp_path / "chk")
    assert "strana_pass" in s and s["probes_pass"] is True
    assert (tmp_path / "chk" / "strana.csv").exists() and (tmp_path / "chk" / "probes.csv").exists()


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, CONTAGION.format(kind="proportional"))
    cli.run("phi", cfg, tmp_path / "a", workers=1)
    cli.run("phi", cfg, tmp_path / "b", workers=1, seed=99)
    assert (tmp_path / "a" / "phi.csv").read_text() != (tmp_path / "b" / "phi.csv").read_text()
    assert _summary(tmp_path / "b")["seed"] == 99


@pytest.mark.parametrize(
    "edit",
    [
        lambda s: s.replace("[run]", "[extras]"),
        lambda s: s.replace("theta_r = 0.5", "theta_r = 0.5\nthetar = 1"),
        lambda s: s.replace("alpha = 2\n", ""),
        lambda s: s.replace("alpha = 2", "alpha = two"),
        lambda s: s.replace("kind = proportional", "kind = quota"),
        lambda s: s.replace("uniform 0 1\next", "gamma 1 2\next"),
        lambda s: s.replace("lambda_min = 1", "lambda_min = 5"),
        lambda s: s + "policy = 1.5\n",
    ],
)
def test_invalid_configs_exit_1(tmp_path, edit, capsys):
    cfg = _write(tmp_path, edit(CONTAGION.format(kind="proportional")))
    assert cli.run("phi", cfg, tmp_path / "out", workers=1) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_file_and_unknown_command(tmp_path):
    assert cli.run("phi", tmp_path / "nope.ini", tmp_path) == 1
    assert cli.run("frobnicate", _write(tmp_path, POISSON), tmp_path) == 1


def test_numerical_failure_exit_2(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("bracket lost")

    monkeypatch.setattr(cli, "estimate_phi_table", boom)
    assert cli.run("phi", _write(tmp_path, CONTAGION.format(kind="proportional")), tmp_path / "o", workers=1) == 2


def test_compare_requires_expected_value_principle(tmp_path):
    text = CONTAGION.format(kind="proportional").replace("kind = evp", "kind = vpp").replace(
        "theta_i = 0.1\ntheta_r = 0.5", "eta_i = 0.1\neta_r = 0.5"
    )
    assert cli.run("compare", _write(tmp_path, text), tmp_path / "o", workers=1) == 1
