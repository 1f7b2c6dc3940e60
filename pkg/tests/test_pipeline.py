"""Pipeline stages, CLI wiring, verification reports, epsilon sweeps."""
import json
import os

import numpy as np
import pytest

import g2link.dataset as ds
import g2link.link as lk
import g2link.pipeline as pl
import g2link.verify as vf
from g2link.pipeline import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    points = pl.cmd_sample(300, 7, str(root))
    dataset_fs = pl.cmd_build_dataset(points, str(root), mode="fs", thetas=5,
                                      seed=7)
    return {"root": str(root), "points": points, "dataset_fs": dataset_fs}


@pytest.fixture(scope="module")
def models(workdir):
    root = workdir["root"]
    form = pl.cmd_train_g2(workdir["dataset_fs"], "form", root, epochs=15,
                           widths=(48, 48), seed=1, batch_size=128)
    metric = pl.cmd_train_g2(workdir["dataset_fs"], "metric", root, epochs=15,
                             widths=(48, 48), seed=1, batch_size=128)
    return form, metric


def test_sample_stage_deterministic(workdir, tmp_path):
    import hashlib
    p2 = pl.cmd_sample(300, 7, str(tmp_path))
    h1 = hashlib.sha256(open(workdir["points"], "rb").read()).hexdigest()
    h2 = hashlib.sha256(open(p2, "rb").read()).hexdigest()
    assert h1 == h2
    doc = json.loads(open(os.path.join(workdir["root"],
                                       "manifest_sample.json")).read())
    assert doc["config"] == {"count": 300, "seed": 7}


def test_build_dataset_record_count(workdir):
    batch, header = ds.load_dataset(workdir["dataset_fs"])
    assert len(batch) == 300 * 5
    assert header.mode == "fs"
    assert np.isclose(header.kahler_scale, 2.0, rtol=1e-5)
    assert header.lam > 0


def test_build_dataset_pointwise_mode(workdir, tmp_path):
    out = pl.cmd_build_dataset(workdir["points"], str(tmp_path), mode="fs",
                               thetas=2, seed=9, upsilon_norm="pointwise")
    batch, header = ds.load_dataset(out)
    assert header.upsilon_norm == "pointwise"
    ratio = vf.wedge_ratio(batch)
    assert np.abs(ratio - 7.0).max() < 1e-9


def test_missing_stage_input_fails(tmp_path):
    with pytest.raises(FileNotFoundError):
        pl.cmd_build_dataset(str(tmp_path / "nope.bin"), str(tmp_path))


def test_nn_mode_requires_cy_model(workdir, tmp_path):
    with pytest.raises(ValueError, match="correction net"):
        pl.build_g2_dataset(ds.load_points(workdir["points"])[0], mode="nn")


def test_train_g2_artifacts(workdir, models):
    form, metric = models
    root = workdir["root"]
    assert os.path.exists(form) and os.path.exists(metric)
    loss = open(os.path.join(root, "loss_form.csv")).read().splitlines()
    assert loss[0] == "epoch,train_loss,val_loss"
    assert len(loss) == 16
    doc = json.loads(open(os.path.join(root,
                                       "manifest_train_form.json")).read())
    assert "dataset" in doc["inputs"]


def test_verify_report_fs(workdir, models, tmp_path):
    form, metric = models
    rep = pl.cmd_verify(workdir["dataset_fs"], str(tmp_path), form_model=form,
                        metric_model=metric, n_ned=12, eps=1e-5)
    # FS-mode exact identities
    assert rep.torsion_exact["median_dpsi"] < 1e-5 * \
        rep.torsion_exact["median_psi_norm"]
    assert rep.contact["all_nonzero"]
    assert rep.torsion_models["n_points"] > 0
    assert np.isfinite(rep.torsion_models["dphi_over_omsq_mean"])
    # artifacts
    report = json.loads((tmp_path / "verification_report.json").read_text())
    assert report["wedge"]["median_ratio"] == rep.wedge["median_ratio"]
    hist = (tmp_path / "phi_histograms.csv").read_text().splitlines()
    assert hist[0] == "component,bin_left,bin_right,count"
    comps = {int(line.split(",")[0]) for line in hist[1:]}
    assert comps == set(range(35))
    ghist = (tmp_path / "g_histograms.csv").read_text().splitlines()
    gcomps = {int(line.split(",")[0]) for line in ghist[1:]}
    assert gcomps == set(range(28))


def test_verify_without_models(workdir, tmp_path):
    rep = pl.cmd_verify(workdir["dataset_fs"], str(tmp_path), n_ned=6)
    assert rep.torsion_models == {}
    assert rep.wedge["median_ratio"] == pytest.approx(7.0, abs=1.0)


def test_contact_condition_vectorized_matches_ned(workdir):
    batch, header = ds.load_dataset(workdir["dataset_fs"])
    sub = batch.subset(np.arange(8))
    tops = vf.contact_condition_all(sub, header)
    assert tops.shape == (8,)
    assert np.all(np.abs(tops) > 1e-8)
    # elementwise agreement with the generic per-point NED route
    from g2link.forms import AltForm, wedge
    from g2link.ned import ned
    w, ze, theta, a, e = vf._chart_data_from_records(sub)
    for i in range(8):
        ev = vf._record_evaluator(sub, header, i, w, ze, a, e)
        u0 = lk.chart_center(w[i:i + 1], ze[i:i + 1], theta[i])
        d_eta = ned(ev.eta_evaluator(), u0, 1e-4)
        eta = AltForm(7, 1, ev.eta_at(u0))
        top = wedge(wedge(wedge(eta, d_eta), d_eta), d_eta).coeffs[0]
        assert np.isclose(top, tops[i], rtol=1e-6)


def test_sweep_exact_no_spike(workdir, tmp_path):
    grid = np.logspace(-8, -1, 8)
    res = pl.cmd_sweep_eps(workdir["dataset_fs"], str(tmp_path),
                           eps_grid=grid, n_points=4, seed=0)
    assert set(res) == {"phi_exact", "psi_exact"}
    sweep = res["phi_exact"]
    assert len(sweep.rows()) == len(grid)
    assert "spike" not in sweep.regimes
    lines = (tmp_path / "sweep_phi_exact.csv").read_text().splitlines()
    assert len(lines) == len(grid) + 1


def test_sweep_with_models(workdir, models, tmp_path):
    form, metric = models
    grid = np.logspace(-17, 0, 12)
    res = pl.cmd_sweep_eps(workdir["dataset_fs"], str(tmp_path),
                           form_model=form, metric_model=metric,
                           eps_grid=grid, n_points=3, seed=0)
    assert set(res) == {"phi_model", "psi_model"}
    med = np.asarray(res["psi_model"].medians)
    assert med[0] < 1e-10  # float collapse at the smallest eps
    assert med[-1] > 0


def test_cli_entry_end_to_end(tmp_path):
    out = str(tmp_path)
    assert main(["sample", "--count", "120", "--seed", "2",
                 "--out", out]) == 0
    assert main(["build-dataset", "--points", os.path.join(out, "points.bin"),
                 "--mode", "fs", "--thetas", "2", "--seed", "2",
                 "--out", out]) == 0
    assert main(["train-g2", "--dataset", os.path.join(out, "dataset_fs.bin"),
                 "--kind", "form", "--epochs", "2", "--widths", "16",
                 "--batch-size", "64", "--out", out]) == 0
    assert main(["verify", "--dataset", os.path.join(out, "dataset_fs.bin"),
                 "--n-ned", "4", "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "verification_report.json"))


def test_cli_train_cy_smoke(tmp_path):
    out = str(tmp_path)
    assert main(["sample", "--count", "150", "--seed", "4",
                 "--out", out]) == 0
    assert main(["train-cy", "--points", os.path.join(out, "points.bin"),
                 "--epochs", "2", "--widths", "8", "8",
                 "--batch-size", "64", "--out", out]) == 0
    ck = os.path.join(out, "cy_model.bin")
    assert os.path.exists(ck)
    assert main(["build-dataset", "--points", os.path.join(out, "points.bin"),
                 "--mode", "nn", "--cy-model", ck, "--thetas", "2",
                 "--out", out]) == 0
    batch, header = ds.load_dataset(os.path.join(out, "dataset_nn.bin"))
    assert header.mode == "nn"
    assert len(batch) == 300
    lines = open(os.path.join(out, "cy_loss.csv")).read().splitlines()
    assert lines[0] == "epoch,ma_loss,vol_loss,split"
