import numpy as np
import pytest

from mppd_lab.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from mppd_lab.report import read_csv

SMALL = """\
rho = 1.0
lambda = 0.99
T = 4
epochs = 3
batch_size = 32
layer_sizes = 784, 16
samples_per_class = 30
test_samples_per_class = 10
eval_samples = 20
checkpoint_every = 1
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL)
    return p


def test_mppd_demo_constant_matches_closed_form(tmp_path):
    assert main(["mppd-demo", "--steps", "30", "--out", str(tmp_path)]) == EXIT_OK
    meta, rows = read_csv(tmp_path / "mppd_constant.csv")
    assert len(rows) == 30
    simp = np.array([float(r["simplified"]) for r in rows])
    closed = np.array([float(r["closed_form"]) for r in rows])
    assert np.all(np.diff(simp) >= 0)
    assert np.allclose(simp, closed, rtol=0, atol=1e-12)
    assert "lambda=0.99" in meta
    assert (tmp_path / "mppd_constant.svg").read_text().startswith("<svg")
    assert (tmp_path / "mppd_gaussian.csv").exists()


def test_train_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.file")]) == EXIT_DATA
    assert "config not found" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["bogus"]) == EXIT_USAGE


def test_missing_required_flag():
    assert main(["train"]) == EXIT_USAGE


def test_gain_check_fresh_network(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gain-check", "--trials", "50", "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 1
    for r in rows:
        assert float(r["empirical"]) <= float(r["gamma"])


def test_train_writes_checkpoints_and_metrics(tmp_path, config):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out), "--quiet"]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["epoch_0001.ckpt", "epoch_0002.ckpt", "epoch_0003.ckpt", "final.ckpt", "metrics.csv"]
    meta, rows = read_csv(out / "metrics.csv")
    assert list(rows[0]) == ["epoch", "task_loss", "msmppd", "clean_acc", "pgd_acc"]
    assert len(rows) == 3
    assert meta.startswith("# seed=0, lambda=0.99, u_th=1.0, T=4, rho=1.0, chi=0.5, omega=1.0")


def test_train_is_reproducible_and_resumable(tmp_path, config):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        assert main(["train", "--config", str(config), "--out", str(d), "--quiet"]) == EXIT_OK
    assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()
    assert main(["train", "--config", str(config), "--out", str(c), "--quiet", "--resume", str(a / "epoch_0001.ckpt")]) == EXIT_OK
    assert (c / "final.ckpt").read_bytes() == (a / "final.ckpt").read_bytes()
    assert (c / "metrics.csv").read_bytes() == (a / "metrics.csv").read_bytes()


def test_resume_with_other_config_rejected(tmp_path, config):
    out = tmp_path / "a"
    main(["train", "--config", str(config), "--out", str(out), "--quiet"])
    other = tmp_path / "other.cfg"
    other.write_text(SMALL.replace("rho = 1.0", "rho = 0.5"))
    assert main(["train", "--config", str(other), "--resume", str(out / "final.ckpt"), "--out", str(tmp_path / "b")]) == EXIT_DATA


def test_attack_eval_and_gain_check_on_checkpoint(tmp_path, config):
    out = tmp_path / "run"
    main(["train", "--config", str(config), "--out", str(out), "--quiet"])
    csv_path = tmp_path / "atk.csv"
    rc = main(["attack-eval", "--checkpoint", str(out / "final.ckpt"), "--kinds", "clean,fgsm,pgd", "--out", str(csv_path)])
    assert rc == EXIT_OK
    _, rows = read_csv(csv_path)
    assert [r["attack"] for r in rows] == ["clean", "fgsm", "pgd"]
    assert all(0 <= float(r["accuracy"]) <= 1 for r in rows)
    assert main(["gain-check", "--checkpoint", str(out / "final.ckpt"), "--trials", "20"]) == EXIT_OK


def test_attack_eval_unknown_kind(tmp_path, config):
    out = tmp_path / "run"
    main(["train", "--config", str(config), "--out", str(out), "--quiet"])
    assert main(["attack-eval", "--checkpoint", str(out / "final.ckpt"), "--kinds", "apgd"]) == EXIT_USAGE


def test_corrupt_checkpoint_is_data_error(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["attack-eval", "--checkpoint", str(bad)]) == EXIT_DATA


def test_failed_train_leaves_no_partial_files(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL + "dataset = idx\nidx_train_images = /nonexistent\nidx_train_labels = x\nidx_test_images = y\nidx_test_labels = z\n")
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_DATA
    assert not out.exists()


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    from mppd_lab import cli
    from mppd_lab.training import NonFiniteLossError

    def boom(*a, **k):
        raise NonFiniteLossError("nan", snapshot={})

    monkeypatch.setattr(cli, "fit", boom)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_NUMERIC
