import json

import numpy as np
import pytest

from ttde.cli import main as cli_main
from ttde.experiment import (CSV_HEADER, METRICS, ExperimentConfig, derive_seed,
                             run_oracle_check, run_rate_study, write_csv)


def small_config(**overrides):
    base = dict(
        density={"kind": "linear-tilt", "a": 0.5, "dim": 1},
        alpha=2, dim=1, n_grid=[100, 200, 400], replicates=2, seed=77,
        metrics_nodes_per_axis=257,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


# ---------------------------------------------------------------------------
# configuration and seeding
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        small_config(n_grid=[100, 100])
    with pytest.raises(ValueError, match="replicates"):
        small_config(replicates=0)
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"density": {}, "alpha": 2, "dim": 1,
                                    "n_grid": [10], "replicates": 1, "seed": 0,
                                    "bogus": True})
    with pytest.raises(ValueError, match="disagrees"):
        small_config(density={"kind": "uniform", "dim": 2})


def test_config_env_thread_override(monkeypatch):
    monkeypatch.setenv("TTDE_THREADS", "3")
    assert small_config().threads == 3


def test_derive_seed_streams():
    seeds = {derive_seed(5, i, j) for i in range(4) for j in range(16)}
    assert len(seeds) == 64
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    assert derive_seed(5, 1, 2) != derive_seed(6, 1, 2)


# ---------------------------------------------------------------------------
# oracle check
# ---------------------------------------------------------------------------

def test_oracle_check_identity():
    cfg = small_config(density={"kind": "uniform", "dim": 1},
                       reference={"kind": "uniform", "dim": 1})
    report = run_oracle_check(cfg)
    assert report["pushforward_sup_error"] < 1e-9
    assert report["roundtrip_residual"] < 1e-9
    assert report["boundary_sup_error"] < 1e-9
    assert report["monotonicity_min"] > 0.9


def test_oracle_check_closed_form_d1():
    report = run_oracle_check(small_config())
    assert report["pushforward_sup_error"] < 1e-8
    assert report["monotonicity_min"] >= 0.5 - 1e-9


def test_oracle_check_coupled_d2():
    cfg = ExperimentConfig.from_dict(dict(
        density={"kind": "nonproduct-coupling", "strength": 0.5, "dim": 2},
        alpha=2, dim=2, n_grid=[100], replicates=1, seed=3,
        metrics_nodes_per_axis=65,
    ))
    report = run_oracle_check(cfg)
    assert report["pushforward_sup_error"] < 5e-4
    assert report["roundtrip_residual"] < 1e-8


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    cfg = small_config(output_dir=str(out))
    rows, summary = run_rate_study(cfg, csv_path=out / "rates.csv",
                                   summary_path=out / "summary.json")
    return cfg, rows, summary, out


def test_study_row_accounting(tiny_study):
    cfg, rows, summary, out = tiny_study
    assert len(rows) == len(cfg.n_grid) * cfg.replicates * len(METRICS)
    seen = {(r.n, r.replicate, r.metric) for r in rows}
    assert len(seen) == len(rows)
    for r in rows:
        assert r.value >= 0.0
        assert r.seed == derive_seed(cfg.seed, cfg.n_grid.index(r.n), r.replicate)


def test_study_summary_contents(tiny_study):
    cfg, rows, summary, out = tiny_study
    assert summary["theoretical_slope"] == pytest.approx(-0.4)
    for metric in METRICS:
        entry = summary["metrics"][metric]
        assert len(entry["medians"]) == len(cfg.n_grid)
        assert "fit" in entry
    hell = summary["metrics"]["hellinger"]["medians"]
    assert hell[str(cfg.n_grid[0])] > hell[str(cfg.n_grid[-1])]


def test_study_csv_deterministic(tiny_study, tmp_path):
    cfg, rows, summary, out = tiny_study
    first = (out / "rates.csv").read_bytes()
    rows2, _ = run_rate_study(cfg, csv_path=tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == first


def test_csv_schema(tiny_study):
    cfg, rows, summary, out = tiny_study
    lines = (out / "rates.csv").read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(rows)
    fields = lines[1].split(",")
    assert len(fields) == 9
    int(fields[0]); int(fields[1]); int(fields[2]); float(fields[4])
    assert fields[3] in METRICS
    assert fields[8] in ("true", "false")
    # wall time column is zeroed by default so reruns are byte-identical
    assert all(line.split(",")[7] == "0" for line in lines[1:])


def test_csv_wall_time_flag(tiny_study, tmp_path):
    cfg, rows, summary, out = tiny_study
    write_csv(rows, tmp_path / "wall.csv", with_wall_time=True)
    lines = (tmp_path / "wall.csv").read_text().strip().split("\n")
    assert any(float(line.split(",")[7]) > 0.0 for line in lines[1:])


def test_summary_json_written(tiny_study):
    cfg, rows, summary, out = tiny_study
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["metrics"]["hellinger"]["fit"]["slope"] == pytest.approx(
        summary["metrics"]["hellinger"]["fit"]["slope"])


def test_study_threads_match_serial(tmp_path):
    cfg_serial = small_config(n_grid=[100, 200], replicates=2)
    rows_s, _ = run_rate_study(cfg_serial, csv_path=tmp_path / "serial.csv")
    cfg_par = small_config(n_grid=[100, 200], replicates=2, threads=2)
    rows_p, _ = run_rate_study(cfg_par, csv_path=tmp_path / "par.csv")
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "par.csv").read_bytes()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def write_config(tmp_path, **overrides):
    data = dict(
        density={"kind": "linear-tilt", "a": 0.5, "dim": 1},
        alpha=2, dim=1, n_grid=[100, 200, 400], replicates=2, seed=77,
        metrics_nodes_per_axis=257, output_dir=str(tmp_path),
    )
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli_main(["--version"])
    assert exc.value.code == 0
    assert "ttde" in capsys.readouterr().out


def test_cli_missing_config(capsys):
    code = cli_main(["oracle-check", "--config", "/nowhere/conf.json"])
    assert code == 1
    assert "/nowhere/conf.json" in capsys.readouterr().err


def test_cli_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        cli_main(["rates", "--config", "x.json", "--frobnicate"])
    assert exc.value.code == 1


def test_cli_sample_n_must_be_positive(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code = cli_main(["sample", "--config", str(cfg), "--n", "0",
                     "--out", str(tmp_path / "s.csv")])
    assert code == 1
    assert "n must be positive" in capsys.readouterr().err


def test_cli_sample_writes_csv(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "samples.csv"
    assert cli_main(["sample", "--config", str(cfg), "--n", "50",
                     "--out", str(out), "--seed", "9"]) == 0
    rows = out.read_text().strip().split("\n")
    assert len(rows) == 50
    assert all(0.0 <= float(v) <= 1.0 for v in rows[0].split(","))


def test_cli_oracle_check(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli_main(["oracle-check", "--config", str(cfg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["pushforward_sup_error"] < 1e-8


def test_cli_fit_then_metrics(tmp_path, capsys):
    cfg = write_config(tmp_path)
    fit_out = tmp_path / "fit.json"
    assert cli_main(["fit", "--config", str(cfg), "--n", "300", "--seed", "4",
                     "--out", str(fit_out)]) == 0
    payload = json.loads(fit_out.read_text())
    assert payload["n"] == 300 and "theta" in payload
    theta_path = tmp_path / "theta.json"
    theta_path.write_text(json.dumps(payload["theta"]))
    assert cli_main(["metrics", "--config", str(cfg),
                     "--theta", str(theta_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) >= {"hellinger", "l2", "kl", "tv"}
    assert report["hellinger"] < 0.2


def test_cli_rates(tmp_path, capsys):
    cfg = write_config(tmp_path, n_grid=[100, 200, 400], replicates=1)
    assert cli_main(["rates", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "hellinger" in out and "slope" in out
    assert (tmp_path / "rates.csv").exists()
    assert (tmp_path / "summary.json").exists()


def test_cli_fit_bad_n(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli_main(["fit", "--config", str(cfg), "--n", "-3", "--seed", "1"]) == 1
