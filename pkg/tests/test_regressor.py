"""G2 regressors: normalisation, Cholesky head, training, gradients."""
import numpy as np
import pytest

import g2link.link as lk
import g2link.quintic as q
import g2link.regressor as rg
from g2link.nn import DenseNet, finite_diff_grad, huber_residual_loss


@pytest.fixture(scope="module")
def g2batch():
    batch = q.sample_batch(240, seed=17)
    w, ze = batch.chart_data()
    h = 2.0 * q.fs_pullback(w, ze, batch.a, batch.e)
    c = q.residue_coeff(ze, batch.a, batch.e)
    lam = lk.normalize_upsilon(c, np.real(np.linalg.det(h)))
    T = 5
    rng = np.random.default_rng(1)
    thetas = lk.fibre_angles(T, len(batch), rng)
    rep = lambda a: np.repeat(a, T, axis=0)  # noqa: E731
    return lk.assemble_g2_batch(rep(w), rep(ze), rep(batch.a), rep(batch.e),
                                thetas, rep(h), rep(c), lam)


@pytest.fixture(scope="module")
def trained(g2batch):
    labels = np.zeros(len(g2batch), dtype=int)
    labels[-200:-100] = 1
    labels[-100:] = 2
    cfg = rg.TrainConfig(widths=(32, 32), epochs=20, batch_size=128,
                         lr=2e-3, seed=5)
    form_model, form_hist = rg.train("form", g2batch, labels, cfg)
    metric_model, metric_hist = rg.train("metric", g2batch, labels, cfg)
    return form_model, metric_model, form_hist, metric_hist, labels


# ---------------------------------------------------------------------------
# inputs and normalisation

def test_build_input_layout(g2batch):
    sample = g2batch[0]
    x = rg.build_input(sample)
    assert x.shape == (19,)
    assert np.allclose(x[:10], sample.input19[:10])
    a, e = x[17], x[18]
    assert a == int(a) and e == int(e)
    assert 0 <= a < 5 and 0 <= e < 5 and a != e


def test_theta_copies_share_targets(g2batch):
    # same base point, different theta: ambient coords differ, patches equal
    x1 = g2batch.input19[0]
    x2 = g2batch.input19[1]
    assert np.abs(x1[:10] - x2[:10]).max() > 1e-3
    assert np.array_equal(x1[17:], x2[17:])
    assert np.allclose(g2batch.phi[0], g2batch.phi[1], atol=1e-9)


def test_normstats_roundtrip_and_constants():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 19))
    Y = rng.standard_normal((50, 35))
    X[:, 3] = 2.0  # constant coordinate
    stats = rg.NormStats.fit(X, Y)
    assert stats.in_var[3] == 1.0 and stats.const_in[3]
    assert np.abs(stats.denormalize_out(stats.normalize_out(Y)) - Y).max() \
        < 1e-12


def test_normstats_leakage_detector(g2batch, trained):
    # refitting on train+test must change the statistics
    form_model, _, _, _, labels = trained
    X = np.asarray(g2batch.input19)
    Y = np.asarray(g2batch.phi)
    tr = labels == 0
    full = rg.NormStats.fit(X, Y)
    assert not np.allclose(full.out_mean, form_model.stats.out_mean)
    train_only = rg.NormStats.fit(X[tr], Y[tr])
    assert np.allclose(train_only.out_mean, form_model.stats.out_mean)


def test_onehot_patch_ablation():
    X = np.zeros((2, 19))
    X[0, 17], X[0, 18] = 2, 4
    X[1, 17], X[1, 18] = 0, 1
    out = rg.onehot_patch(X)
    assert out.shape == (2, 27)
    assert out[0, 17 + 2] == 1.0 and out[0, 22 + 4] == 1.0
    assert out[1, 17 + 0] == 1.0 and out[1, 22 + 1] == 1.0
    assert out[0, 17:].sum() == 2.0


# ---------------------------------------------------------------------------
# Cholesky parametrization

def test_cholesky_targets_roundtrip(g2batch):
    g = g2batch.metrics()
    raw = rg.cholesky_targets(g)
    assert raw.shape == (len(g2batch), 28)
    back = rg.reassemble_metric(raw)
    assert np.abs(back - g).max() < 1e-10


def test_identity_cholesky_components():
    # L = identity components: zeros off-diagonal, softplus_inv(1) on diagonal
    from g2link.nn import softplus_inv
    raw = np.zeros((1, 28))
    raw[0, rg._DIAG_POS] = softplus_inv(np.ones(7))
    g = rg.reassemble_metric(raw)
    assert np.allclose(g[0], np.eye(7), atol=1e-12)


def test_reassembly_matches_dense_multiplication():
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((5, 28))
    g = rg.reassemble_metric(raw)
    from g2link.nn import softplus
    for i in range(5):
        L = np.zeros((7, 7))
        vals = raw[i].copy()
        vals[rg._DIAG_POS] = softplus(vals[rg._DIAG_POS])
        L[np.tril_indices(7)] = vals
        assert np.allclose(g[i], L @ L.T, atol=1e-12)
    # structural positive semidefiniteness
    assert np.linalg.eigvalsh(g).min() > -1e-12


# ---------------------------------------------------------------------------
# training

def test_capacity_oracle_linear_target():
    # width-8 model drives a representable linear target below 1e-8
    rng = np.random.default_rng(1)
    X = rng.standard_normal((100, 19))
    U = rng.standard_normal((19, 3))
    V = rng.standard_normal((3, 35)) * 0.3
    Y = X @ U @ V + 0.5

    class FakeBatch:
        input19 = X
        phi = Y
    cfg = rg.TrainConfig(widths=(8,), activation="linear", epochs=500,
                         batch_size=10, lr=1e-2, seed=2, lr_step=100,
                         lr_factor=0.5)
    _, hist = rg.train("form", FakeBatch(), np.zeros(100, dtype=int), cfg)
    assert hist[-1][1] < 1e-8


def test_training_decreases_loss(trained):
    _, _, form_hist, metric_hist, _ = trained
    for hist in (form_hist, metric_hist):
        first = [row[1] for row in hist[:10]]
        assert all(np.diff(first) < 0)
        assert hist[-1][1] < hist[0][1]


def test_training_deterministic(g2batch):
    labels = np.zeros(len(g2batch), dtype=int)
    cfg = rg.TrainConfig(widths=(16,), epochs=3, batch_size=128, seed=9)
    _, h1 = rg.train("form", g2batch, labels, cfg)
    _, h2 = rg.train("form", g2batch, labels, cfg)
    assert h1 == h2


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_nan_abort(g2batch, tmp_path):
    labels = np.zeros(len(g2batch), dtype=int)
    cfg = rg.TrainConfig(widths=(8,), epochs=2, batch_size=64, lr=1e200,
                         seed=0)
    with pytest.raises(RuntimeError):
        rg.train("form", g2batch, labels, cfg,
                 checkpoint_path=str(tmp_path / "ck.bin"))
    assert (tmp_path / "ck.bin").exists()


# ---------------------------------------------------------------------------
# prediction

def test_predict_phi_finite_and_shaped(trained, g2batch):
    form_model = trained[0]
    phi = rg.predict_phi(form_model, g2batch.input19[0])
    assert phi.dim == 7 and phi.degree == 3
    assert np.all(np.isfinite(phi.coeffs))


def test_predict_at_train_point_within_band(trained, g2batch):
    form_model, _, form_hist, _, labels = trained
    tr = np.where(labels == 0)[0]
    rmse = np.sqrt(form_hist[-1][1])
    Xn = form_model.stats.normalize_in(np.asarray(g2batch.input19[tr[:50]]))
    pred_n = form_model.net.forward(Xn)
    true_n = form_model.stats.normalize_out(np.asarray(g2batch.phi[tr[:50]]))
    per_pt = np.sqrt(np.mean((pred_n - true_n) ** 2, axis=1))
    assert np.median(per_pt) < 3 * rmse


def test_predict_metric_positive_definite(trained, g2batch):
    _, metric_model, _, _, _ = trained
    g = rg.predict_metric_batch(metric_model, g2batch.input19[:100])
    assert np.linalg.eigvalsh(g).min() > 0
    single = rg.predict_metric(metric_model, g2batch.input19[0])
    assert single.is_positive_definite()


def test_checkpoint_roundtrip(trained, g2batch, tmp_path):
    form_model = trained[0]
    path = tmp_path / "form.bin"
    form_model.save(path, meta={"note": "test"})
    loaded, meta = rg.DenseModel.load(path)
    assert meta["note"] == "test"
    X = np.asarray(g2batch.input19[:8])
    assert np.array_equal(loaded.predict_raw(X), form_model.predict_raw(X))


# ---------------------------------------------------------------------------
# gradients

def test_training_loss_gradcheck_both_kinds(g2batch):
    rng = np.random.default_rng(4)
    X = np.asarray(g2batch.input19[:3])
    for kind, width_out in (("form", 35), ("metric", 28)):
        Y = np.asarray(g2batch.phi[:3]) if kind == "form" \
            else rg.cholesky_targets(g2batch.metrics()[:3])
        net = DenseNet([19, 8, width_out], seed=6)

        def loss_fn(with_grad=False):
            out, cache = net.forward_cache(X)
            loss, dres = huber_residual_loss(out - Y)
            if not with_grad:
                return loss
            dWs, dbs, _ = net.backward(cache, dres)
            return loss, (dWs, dbs)
        _, (dWs, dbs) = loss_fn(True)
        analytic = net.flat_grad(dWs, dbs)
        fd = finite_diff_grad(lambda: loss_fn(), net, step=1e-6)
        rel = np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-7)
        assert rel.max() < 1e-4, kind


def test_metric_space_loss_gradcheck(trained, g2batch):
    _, metric_model, _, _, _ = trained
    import copy
    model = rg.DenseModel("metric", DenseNet([19, 8, 28], seed=7),
                          metric_model.stats)
    X = np.asarray(g2batch.input19[:3])
    G = g2batch.metrics()[:3]
    _, (dWs, dbs) = rg.metric_space_loss(model, X, G, with_grad=True)
    analytic = model.net.flat_grad(dWs, dbs)
    fd = finite_diff_grad(lambda: rg.metric_space_loss(model, X, G),
                          model.net, step=1e-6)
    rel = np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-7)
    assert rel.max() < 1e-4


def test_huber_option_matches_l2_at_infinity():
    rng = np.random.default_rng(8)
    resid = rng.standard_normal((6, 5))
    l_inf, g_inf = huber_residual_loss(resid, np.inf)
    assert np.isclose(l_inf, np.mean(resid ** 2))
    l_fin, g_fin = huber_residual_loss(resid, 0.5)
    assert l_fin < l_inf  # clipped tails
    small = np.abs(resid) <= 0.5
    assert np.allclose(g_fin[small], g_inf[small])


def test_pmcc_helper():
    rng = np.random.default_rng(9)
    true = rng.standard_normal((200, 4))
    pred = true.copy()
    pred[:, 1] = -true[:, 1]
    pred[:, 2] = true[:, 2] + 0.01 * rng.standard_normal(200)
    pmcc = rg.per_component_pmcc(pred, true)
    assert pmcc[0] > 0.999999
    assert pmcc[1] < -0.999999
    assert pmcc[2] > 0.99
