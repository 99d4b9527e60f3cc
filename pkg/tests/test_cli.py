import json

import numpy as np
import pytest

from vbdvs import cli


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


def test_simulate_shapes_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("simulate", "--out", d, "--seed", 1, "--set", "T=100", "--set", "p=50") == 0
    for name in ("y.csv", "x.csv", "beta_true.csv", "sigma2_true.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert read_csv(a / "x.csv").shape == (100, 51)
    assert read_csv(a / "beta_true.csv").shape == (100, 51)
    assert read_csv(a / "y.csv").shape == (100, 2)


def test_simulate_rejects_small_p(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--set", "p=3") == 1
    assert "p >= 4" in capsys.readouterr().err


def test_fit_on_simulated_data(tmp_path):
    assert run("simulate", "--out", tmp_path, "--set", "T=60", "--set", "p=5") == 0
    args = ["fit", "--set", f"y={tmp_path / 'y.csv'}", "--set", f"x={tmp_path / 'x.csv'}",
            "--set", "prior=prior3"]
    assert run(*args, "--out", tmp_path / "f1") == 0
    assert run(*args, "--out", tmp_path / "f2") == 0
    pip = read_csv(tmp_path / "f1" / "pip.csv")[:, 1:]
    assert pip.shape == (60, 5) and np.all((pip >= 0) & (pip <= 1))
    for name in ("coeff_mean.csv", "pip.csv", "sigma2.csv"):
        assert (tmp_path / "f1" / name).read_bytes() == (tmp_path / "f2" / name).read_bytes()
    diag = json.loads((tmp_path / "f1" / "diagnostics.json").read_text())
    assert {"iterations_run", "final_delta", "converged", "wall_ms"} <= set(diag)


def test_fit_missing_input(tmp_path, capsys):
    assert run("fit", "--out", tmp_path, "--set", f"y={tmp_path / 'nope.csv'}") == 1
    assert "nope.csv" in capsys.readouterr().err


def test_fit_numerical_failure_exit_code(tmp_path, monkeypatch):
    from vbdvs import NumericalFailureError

    assert run("simulate", "--out", tmp_path, "--set", "T=20", "--set", "p=4") == 0

    def broken(*a, **k):
        raise NumericalFailureError("singular", stage="rts_smoother", iteration=3)

    monkeypatch.setattr(cli, "fit_vbdvs", broken)
    code = run("fit", "--out", tmp_path / "f", "--set", f"y={tmp_path / 'y.csv'}",
               "--set", f"x={tmp_path / 'x.csv'}")
    assert code == 2


def test_unknown_key_rejected(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--set", "bogus=1") == 1
    assert "bogus" in capsys.readouterr().err
    cfg = tmp_path / "run.cfg"
    cfg.write_text("T = 10\nwhatever = 2\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 1


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\nT = 12\np = 4\nseed = 5\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--seed", 9, "--set", "T=15") == 0
    written = cli.parse_config_text((tmp_path / "o" / "config.txt").read_text(), "simulate")
    assert written["T"] == 15 and written["seed"] == 9 and written["p"] == 4


@pytest.mark.parametrize("command", sorted(cli.SCHEMAS))
def test_config_round_trip(command):
    cfg = cli.resolve_config(command, {}, {})
    text = cli.serialize_config(cfg)
    again = cli.resolve_config(command, cli.parse_config_text(text, command), {})
    assert again == cfg
    assert cli.serialize_config(again) == text


def test_prior_presets_and_overrides():
    cfg = cli.resolve_config("fit", {}, {"prior": "prior1", "h0": 3.0})
    pr = cli._prior_from(cfg)
    assert (pr.g0, pr.h0, pr.c0, pr.d0) == (0.01, 3.0, 100.0, 1.0)


def test_montecarlo_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run("montecarlo", "--out", d, "--seed", 4, "--set", "T=40", "--set", "p=5",
                   "--set", "replications=2", "--set", "record_timing=false") == 0
        outs.append(d)
    for name in ("summary.json", "replications.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    doc = json.loads((outs[0] / "summary.json").read_text())
    assert {"mean_msd", "median_msd", "mean_wall_ms", "n_failed"} <= set(doc)


def test_forecast_eval_blocks_and_self_comparison(tmp_path):
    args = ["forecast-eval", "--out", tmp_path, "--set", "T=50", "--set", "p=4",
            "--set", "horizons=1,2,4,8", "--set", "models=AR"]
    assert run(*args) == 0
    doc = json.loads((tmp_path / "eval.json").read_text())
    assert sorted(doc["results"]) == ["h=1", "h=2", "h=4", "h=8"]
    for block in doc["results"].values():
        assert block["AR"]["rel_msfe"] == 1.0 and block["AR"]["rel_alpl"] == 0.0
    header = (tmp_path / "forecasts.csv").read_text().splitlines()[0]
    assert header == "model,h,origin,point,variance,realized,log_pred_lik"


def test_forecast_eval_csv_source(tmp_path):
    rng = np.random.default_rng(0)
    T = 60
    price = 100 * np.exp(np.cumsum(0.005 + 0.01 * rng.standard_normal(T)))
    X = rng.standard_normal((T, 6))
    with open(tmp_path / "panel.csv", "w") as fh:
        fh.write("date,CPI," + ",".join(f"x{j}" for j in range(6)) + "\n")
        for t in range(T):
            fh.write(f"q{t},{price[t]:.17g}," + ",".join(f"{v:.17g}" for v in X[t]) + "\n")
    with open(tmp_path / "schema.csv", "w") as fh:
        fh.write("name,tcode,factor\nCPI,5,0\n")
        for j in range(6):
            fh.write(f"x{j},1,1\n")
    code = run("forecast-eval", "--out", tmp_path / "o", "--set", "source=csv",
               "--set", f"panel={tmp_path / 'panel.csv'}", "--set", f"schema={tmp_path / 'schema.csv'}",
               "--set", "target=CPI", "--set", "target_transform=true", "--set", "horizons=1,4",
               "--set", "models=AR,VBDVS/FAC5", "--set", "refit_every=5")
    assert code == 0
    doc = json.loads((tmp_path / "o" / "eval.json").read_text())
    assert set(doc["results"]["h=4"]) == {"AR", "VBDVS/FAC5"}


def test_forecast_eval_determinism(tmp_path):
    args = ["forecast-eval", "--set", "T=50", "--set", "p=4", "--set", "models=AR,VBDVS/X",
            "--set", "refit_every=5"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("forecasts.csv", "eval.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
