import csv
import json

import pytest

from glauber_vlasov import cli
from glauber_vlasov import experiments as X
from glauber_vlasov.plotting import PLOTS, emit_plot_data


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


SMALL_SEMIGROUP = {"experiment": "semigroup_convergence", "domain": {"grid_points": 16},
                   "options": {"n_steps": 20}}


def test_run_writes_artifacts_and_exits_zero(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL_SEMIGROUP)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "8/8 bounds pass" in printed
    for name in ("bounds.csv", "summary.json", "provenance.json", "config.json", "gap.csv",
                 "plot_data/gap_vs_eps.csv", "plot_data/manifest.json", "figures/gap_vs_eps.png"):
        assert (out / name).exists(), name
    with open(out / "bounds.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == X.BOUND_COLUMNS
    assert all(r["pass"] == "true" for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True and summary["n_failed"] == 0
    entry = summary["bounds"][0]
    assert {"bound_name", "paper_ref", "measured", "bound", "tolerance", "pass"} <= set(entry)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["seed"] == 20240611 and prov["config"]["experiment"] == "semigroup_convergence"
    with open(out / "plot_data/gap_vs_eps.csv") as fh:
        assert next(csv.reader(fh)) == ["eps", "t", "gap", "bound"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_SEMIGROUP)
    for d in ("a", "b"):
        assert cli.main(["run", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("bounds.csv", "summary.json", "provenance.json", "plot_data/gap_vs_eps.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failed_bound_exits_one(tmp_path):
    doc = dict(SMALL_SEMIGROUP, tolerances={"slope": 0.0})
    out = tmp_path / "out"
    assert cli.main(["run", str(_write(tmp_path, doc)), "--out", str(out)]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is False and summary["n_failed"] == 2


def test_config_errors_exit_two(tmp_path, capsys):
    bad = _write(tmp_path, {"experiment": "vlasov_solve", "domain": {"dimension": 3}})
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "dimension" in capsys.readouterr().err
    assert cli.main(["validate", str(bad)]) == 2
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 2
    good = _write(tmp_path, SMALL_SEMIGROUP, "good.json")
    assert cli.main(["run", str(good), "--out", str(tmp_path / "o"), "--threads", "0"]) == 2


def test_validate_prints_filled_config(tmp_path, capsys):
    path = _write(tmp_path, {"experiment": "kirkwood_monroe", "regime": {"z": 0.5}})
    assert cli.main(["validate", str(path)]) == 0
    captured = capsys.readouterr()
    doc = json.loads(captured.out)
    assert doc["regime"]["c"] == 1.2 and doc["z"] == 0.5
    assert "smallz_ok=false" in captured.err


def test_seed_and_threads_overrides(tmp_path):
    cfg = _write(tmp_path, SMALL_SEMIGROUP)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out), "--seed", "7", "--threads", "2", "--no-plots"]) == 0
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["seed"] == 7 and prov["threads"] == 2
    assert not (out / "figures").exists()


def test_module_error_names_experiment(tmp_path, monkeypatch, capsys):
    def boom(cfg, parts=None):
        raise RuntimeError("solver diverged")

    monkeypatch.setitem(X.RUNNERS, "semigroup_convergence", boom)
    assert cli.main(["run", str(_write(tmp_path, SMALL_SEMIGROUP)), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "semigroup_convergence" in err and "solver diverged" in err


def test_emit_plot_data_rejects_missing_or_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path / "empty")
    (tmp_path / "partial").mkdir()
    (tmp_path / "partial" / "summary.json").write_text(json.dumps({"experiment": "kirkwood_monroe"}))
    with pytest.raises(FileNotFoundError, match="density.csv"):
        emit_plot_data(tmp_path / "partial")
    assert cli.main(["plot", str(tmp_path / "empty")]) == 2


def test_every_experiment_has_plots():
    from glauber_vlasov.config import EXPERIMENTS

    for e in EXPERIMENTS:
        assert PLOTS[e], e
        for spec in PLOTS[e]:
            assert spec.x in spec.columns and set(spec.y) <= set(spec.columns)
            assert set(spec.group) <= set(spec.columns)
