"""Neural multiplicative correction to the Fubini-Study metric on the quintic.

The predicted Hermitian metric is g = g_FS + g_FS (.) S with (.) the
entrywise product and S a symmetrized real network output, trained against a
Monge-Ampere objective (det g proportional to the squared holomorphic volume
density) plus a total-volume penalty.  A zero network reproduces g_FS
exactly, so training starts from the Fubini-Study geometry.
"""
import csv
import logging

import numpy as np

from . import quintic
from .nn import Adam, DenseNet, cosine_decay, save_model
from .quintic import HermitianMetric3, canonical_representative, interleave_real

logger = logging.getLogger("g2link.cy_metric")

INPUT_DIM = 12  # 10 ambient reals of the canonical representative + (a, e)


class CorrectionNet:
    """Dense network producing the symmetric entrywise metric correction."""

    def __init__(self, widths=(64, 64, 64, 64), activation="gelu", seed=0):
        self.net = DenseNet([INPUT_DIM, *widths, 9], activation=activation,
                            seed=seed, zero_last=True)

    def inputs(self, z, a, e):
        """Network input: canonical unit representative + patch indices."""
        z_c = canonical_representative(z, a)
        pa = np.stack([np.atleast_1d(a), np.atleast_1d(e)], axis=1)
        return np.concatenate([interleave_real(z_c), pa.astype(np.float64)], axis=1)

    def correction(self, X):
        """Symmetrized 3x3 correction S for a batch of inputs."""
        out, cache = self.net.forward_cache(X)
        M = out.reshape(-1, 3, 3)
        return 0.5 * (M + M.transpose(0, 2, 1)), cache

    @staticmethod
    def correction_grad_to_output(dS):
        """Pull a gradient w.r.t. S back to the raw 9-component output."""
        return (0.5 * (dS + dS.transpose(0, 2, 1))).reshape(len(dS), 9)


def predict_metric_batch(net, z, a, e, h_fs):
    """Hermitian prediction g = h_FS + h_FS (.) S over a batch."""
    X = net.inputs(z, a, e)
    S, _ = net.correction(X)
    return h_fs * (1.0 + S)


def predict_metric(net, p):
    """Single-point Hermitian metric prediction for a QuinticPoint."""
    a = np.array([p.patch[0]])
    e = np.array([p.patch[1]])
    w, ze = quintic.affine_chart(p.z[None, :], a, e)
    h_fs = quintic.fs_pullback(w, ze, a, e)
    g = predict_metric_batch(net, p.z[None, :], a, e, h_fs)[0]
    return HermitianMetric3(g)


class CyTrainingData:
    """Cached per-point geometry consumed by the losses."""

    def __init__(self, batch):
        w, ze = batch.chart_data()
        self.z = batch.z
        self.a = batch.a
        self.e = batch.e
        self.weight = batch.weight
        self.h_fs = quintic.fs_pullback(w, ze, batch.a, batch.e)
        self.c = quintic.residue_coeff(ze, batch.a, batch.e)
        self.det_fs = np.real(np.linalg.det(self.h_fs))

    def __len__(self):
        return len(self.z)

    def subset(self, idx):
        out = object.__new__(CyTrainingData)
        for name in ("z", "a", "e", "weight", "h_fs", "c", "det_fs"):
            setattr(out, name, getattr(self, name)[idx])
        return out


def _dets_and_grad(net, data, X=None):
    """det g over a batch plus the backprop context.

    Returns (det, g_inv_h, cache, X): d(det_i)/dS_{mn} = det_i *
    Re[(g^-1)_{nm} h_{mn}], assembled later per loss.
    """
    X = net.inputs(data.z, data.a, data.e) if X is None else X
    S, cache = net.correction(X)
    g = data.h_fs * (1.0 + S)
    det = np.real(np.linalg.det(g))
    g_inv = np.linalg.inv(g)
    g_inv_h = np.real(g_inv.transpose(0, 2, 1) * data.h_fs)  # [n,m,n]->Re[(g^-1)_nm h_mn]
    return det, g_inv_h, cache, X


def loss_monge_ampere(net, data, kappa, with_grad=False):
    """Weighted Monge-Ampere defect: mean_w |1 - det g / (kappa |c|^2)|."""
    if len(data) == 0:
        raise ValueError("empty batch")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    det, g_inv_h, cache, _ = _dets_and_grad(net, data)
    target = kappa * np.abs(data.c) ** 2
    resid = 1.0 - det / target
    wsum = data.weight.sum()
    loss = float(np.sum(data.weight * np.abs(resid)) / wsum)
    if not with_grad:
        return loss
    dl_ddet = -data.weight * np.sign(resid) / (target * wsum)
    dS = dl_ddet[:, None, None] * det[:, None, None] * g_inv_h
    d_out = CorrectionNet.correction_grad_to_output(dS)
    dWs, dbs, _ = net.net.backward(cache, d_out)
    return loss, (dWs, dbs)


def loss_volume(net, data, with_grad=False):
    """Total-volume defect |V(g) - V(g_FS)| / V(g_FS) in the weighted measure."""
    det, g_inv_h, cache, _ = _dets_and_grad(net, data)
    wsum = data.weight.sum()
    v_pred = float(np.sum(data.weight * det) / wsum)
    v_fs = float(np.sum(data.weight * data.det_fs) / wsum)
    loss = abs(v_pred - v_fs) / v_fs
    if not with_grad:
        return loss
    dl_ddet = np.sign(v_pred - v_fs) * data.weight / (wsum * v_fs)
    dS = dl_ddet[:, None, None] * det[:, None, None] * g_inv_h
    d_out = CorrectionNet.correction_grad_to_output(dS)
    dWs, dbs, _ = net.net.backward(cache, d_out)
    return loss, (dWs, dbs)


def composite_loss(net, data, kappa, ma_weight=1.0, vol_weight=1.0,
                   with_grad=False):
    """Weighted sum of the Monge-Ampere and volume objectives."""
    if not with_grad:
        return (ma_weight * loss_monge_ampere(net, data, kappa)
                + vol_weight * loss_volume(net, data))
    l_ma, (dW1, db1) = loss_monge_ampere(net, data, kappa, with_grad=True)
    l_vol, (dW2, db2) = loss_volume(net, data, with_grad=True)
    dWs = [ma_weight * a + vol_weight * b for a, b in zip(dW1, dW2)]
    dbs = [ma_weight * a + vol_weight * b for a, b in zip(db1, db2)]
    return ma_weight * l_ma + vol_weight * l_vol, (dWs, dbs)


def estimate_kappa(net, data):
    """Volume-ratio normalization <det g> / <|c|^2>, re-estimated per epoch."""
    det = np.real(np.linalg.det(
        predict_metric_batch(net, data.z, data.a, data.e, data.h_fs)))
    return quintic.kappa_ratio(det, data.c, data.weight)


def positive_definite_fraction(net, data):
    """Diagnostic: fraction of predictions that are positive-definite.

    The multiplicative Ansatz keeps predictions Hermitian but not
    automatically positive; training should drive failures to zero.
    """
    g = predict_metric_batch(net, data.z, data.a, data.e, data.h_fs)
    return float(np.mean(np.linalg.eigvalsh(g).min(axis=-1) > 0.0))


class TrainState:
    """Model, optimizer and loss history of one correction-net training run."""

    def __init__(self, net, optimizer, epoch=0):
        self.net = net
        self.optimizer = optimizer
        self.epoch = epoch
        self.history = []  # (epoch, ma_train, vol_train, ma_val, vol_val)
        self.kappa = 1.0

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "ma_loss", "vol_loss", "split"])
            for epoch, ma_t, vol_t, ma_v, vol_v in self.history:
                writer.writerow([epoch, f"{ma_t:.10e}", f"{vol_t:.10e}", "train"])
                writer.writerow([epoch, f"{ma_v:.10e}", f"{vol_v:.10e}", "val"])


def train_cy(state, data, epochs, lr=1e-3, batch_size=1024, val_fraction=0.1,
             seed=0, ma_weight=1.0, vol_weight=1.0, checkpoint_every=0,
             checkpoint_path=None, divergence_limit=1e3):
    """Train the correction net; deterministic given the seed.

    The Monge-Ampere normalization kappa is re-estimated from the full
    training split at the start of every epoch.  Aborts on divergence.
    """
    rng = np.random.default_rng(seed)
    n_val = int(len(data) * val_fraction)
    perm = rng.permutation(len(data))
    val = data.subset(perm[:n_val]) if n_val else None
    train = data.subset(perm[n_val:])
    for _ in range(epochs):
        state.kappa = estimate_kappa(state.net, train)
        order = rng.permutation(len(train))
        lr_now = cosine_decay(lr, state.epoch, max(epochs, 1))
        for start in range(0, len(train), batch_size):
            chunk = train.subset(order[start:start + batch_size])
            _, (dWs, dbs) = composite_loss(state.net, chunk, state.kappa,
                                           ma_weight, vol_weight, with_grad=True)
            state.optimizer.step(dWs, dbs, lr=lr_now)
        ma_t = loss_monge_ampere(state.net, train, state.kappa)
        vol_t = loss_volume(state.net, train)
        if val is not None and len(val):
            ma_v = loss_monge_ampere(state.net, val, state.kappa)
            vol_v = loss_volume(state.net, val)
        else:
            ma_v, vol_v = np.nan, np.nan
        state.epoch += 1
        state.history.append((state.epoch, ma_t, vol_t, ma_v, vol_v))
        if ma_t + vol_t > divergence_limit:
            raise RuntimeError(
                f"training diverged at epoch {state.epoch}: loss {ma_t + vol_t:.3g}")
        if checkpoint_every and checkpoint_path and \
                state.epoch % checkpoint_every == 0:
            save_correction_net(checkpoint_path, state.net,
                                meta={"epoch": state.epoch, "kappa": state.kappa})
        logger.info("cy epoch %d: ma=%.4g vol=%.4g (val ma=%.4g)",
                    state.epoch, ma_t, vol_t, ma_v)
    pd_frac = positive_definite_fraction(state.net, data)
    if pd_frac < 1.0:
        logger.warning("%.3f%% of predictions are not positive-definite",
                       100.0 * (1.0 - pd_frac))
    return state


def new_train_state(widths=(64, 64, 64, 64), lr=1e-3, seed=0):
    net = CorrectionNet(widths=widths, seed=seed)
    return TrainState(net, Adam(net.net, lr=lr))


def save_correction_net(path, net, meta=None):
    save_model(path, "cy", net.net, extras={}, meta=meta or {})


def load_correction_net(path):
    from .nn import load_model
    kind, dense, _, meta = load_model(path)
    if kind != "cy":
        raise ValueError(f"checkpoint kind {kind!r} is not a correction net")
    out = CorrectionNet.__new__(CorrectionNet)
    out.net = dense
    return out, meta


def hermitian_fn_from_net(net):
    """Adapter: chart data -> predicted Hermitian metric, for ChartEvaluator."""
    def fn(w, ze, a, e):
        h_fs = quintic.fs_pullback(w, ze, a, e)
        N = len(np.atleast_1d(ze))
        zhat = np.zeros((N, quintic.NCOORDS), dtype=np.complex128)
        rows = np.arange(N)
        a = np.atleast_1d(a)
        e = np.atleast_1d(e)
        zhat[rows, a] = 1.0
        for n in range(N):
            zhat[n, list(quintic.retained_indices(a[n], e[n]))] = np.atleast_2d(w)[n]
        zhat[rows, e] = np.atleast_1d(ze)
        zhat /= np.linalg.norm(zhat, axis=1, keepdims=True)
        return predict_metric_batch(net, zhat, a, e, h_fs)
    return fn
