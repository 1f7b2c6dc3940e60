"""Supervised regressors for the G2 3-form (35 components) and induced metric
(28 Cholesky components) on the link.

Both models share the architecture: input/output standardisation layers fitted
on the training split only, a dense GELU core, and for the metric model a
Cholesky head g = L L^T whose diagonal passes through softplus, making every
prediction positive-semidefinite by construction.
"""
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .forms import AltForm, MetricTensor
from .nn import (Adam, DenseNet, huber_residual_loss, save_model, load_model,
                 softplus, softplus_grad, softplus_inv, step_decay)

logger = logging.getLogger("g2link.regressor")

INPUT_DIM = 19
PHI_DIM = 35
METRIC_DIM = 28
_TRIL = np.tril_indices(7)
_DIAG_POS = np.where(_TRIL[0] == _TRIL[1])[0]  # positions of L_ii inside the 28


def build_input(sample):
    """19-dimensional regressor input of one sample:
    [10 ambient coords, 7 contact-form coefficients, patch a, patch e]."""
    return np.asarray(sample.input19, dtype=np.float64)


def onehot_patch(X):
    """Ablation input transform: expand the two patch integers to 2 x 5 one-hot."""
    X = np.atleast_2d(X)
    out = np.zeros((len(X), 17 + 10))
    out[:, :17] = X[:, :17]
    a = X[:, 17].astype(int)
    e = X[:, 18].astype(int)
    out[np.arange(len(X)), 17 + a] = 1.0
    out[np.arange(len(X)), 22 + e] = 1.0
    return out


class NormStats:
    """Per-coordinate standardisation statistics, fitted on training data only."""

    def __init__(self, in_mean, in_var, out_mean, out_var):
        self.in_mean = in_mean
        self.in_var = in_var
        self.out_mean = out_mean
        self.out_var = out_var
        self.const_in = in_var < 1e-12
        self.const_out = out_var < 1e-12

    @classmethod
    def fit(cls, X, Y):
        stats = cls(X.mean(axis=0), X.var(axis=0), Y.mean(axis=0), Y.var(axis=0))
        n_const = int(stats.const_in.sum() + stats.const_out.sum())
        if n_const:
            logger.info("%d constant coordinates; variance clamped to 1", n_const)
        stats.in_var = np.where(stats.const_in, 1.0, stats.in_var)
        stats.out_var = np.where(stats.const_out, 1.0, stats.out_var)
        return stats

    def normalize_in(self, X):
        return (X - self.in_mean) / np.sqrt(self.in_var)

    def normalize_out(self, Y):
        return (Y - self.out_mean) / np.sqrt(self.out_var)

    def denormalize_out(self, Yn):
        return Yn * np.sqrt(self.out_var) + self.out_mean

    def arrays(self):
        return {"in_mean": self.in_mean, "in_var": self.in_var,
                "out_mean": self.out_mean, "out_var": self.out_var}


@dataclass
class TrainConfig:
    widths: tuple = (512, 512, 256, 256)
    activation: str = "gelu"
    lr: float = 1e-3
    lr_step: int = 50
    lr_factor: float = 0.5
    batch_size: int = 1024
    epochs: int = 150
    huber_delta: float = np.inf
    seed: int = 0
    onehot: bool = False
    extras: dict = field(default_factory=dict)


class DenseModel:
    """Normalisation-wrapped dense regressor for one output kind."""

    def __init__(self, kind, net, stats, onehot=False):
        if kind not in ("form", "metric"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.net = net
        self.stats = stats
        self.onehot = onehot

    def _prep(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.onehot:
            X = onehot_patch(X)
        return self.stats.normalize_in(X)

    def predict_raw(self, X):
        """Denormalized network output (35 form coefficients or 28 Cholesky)."""
        return self.stats.denormalize_out(self.net.forward(self._prep(X)))

    def save(self, path, meta=None):
        meta = dict(meta or {})
        meta["onehot"] = bool(self.onehot)
        save_model(path, self.kind, self.net, extras=self.stats.arrays(), meta=meta)

    @classmethod
    def load(cls, path):
        kind, net, extras, meta = load_model(path)
        stats = NormStats(extras["in_mean"], extras["in_var"],
                          extras["out_mean"], extras["out_var"])
        return cls(kind, net, stats, onehot=bool(meta.get("onehot", False))), meta


# ---------------------------------------------------------------------------
# Cholesky parametrization of the metric targets

def cholesky_targets(g):
    """28 raw training targets per metric: lower-triangular Cholesky factors
    with the diagonal mapped through inverse softplus."""
    g = np.asarray(g)
    if g.ndim == 2:
        g = g[None]
    L = np.linalg.cholesky(g)
    raw = L[:, _TRIL[0], _TRIL[1]]
    raw[:, _DIAG_POS] = softplus_inv(raw[:, _DIAG_POS])
    return raw


def reassemble_metric(raw):
    """Metrics L L^T from raw 28-component rows (softplus on the diagonal)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    vals = raw.copy()
    vals[:, _DIAG_POS] = softplus(vals[:, _DIAG_POS])
    L = np.zeros((len(raw), 7, 7))
    L[:, _TRIL[0], _TRIL[1]] = vals
    return L @ L.transpose(0, 2, 1)


def predict_phi_batch(model, X):
    if model.kind != "form":
        raise ValueError("predict_phi needs a form model")
    return model.predict_raw(X)


def predict_phi(model, input19):
    """Predicted 3-form at one input, as an AltForm."""
    return AltForm(7, 3, predict_phi_batch(model, input19)[0])


def predict_metric_batch(model, X):
    if model.kind != "metric":
        raise ValueError("predict_metric needs a metric model")
    return reassemble_metric(model.predict_raw(X))


def predict_metric(model, input19):
    """Predicted metric at one input; positive-definite whenever all softplus
    diagonals are positive (always, structurally semidefinite)."""
    return MetricTensor(predict_metric_batch(model, input19)[0])


# ---------------------------------------------------------------------------
# Training

def targets_for(kind, batch):
    if kind == "form":
        return np.asarray(batch.phi, dtype=np.float64)
    return cholesky_targets(batch.metrics())


def train(kind, batch, labels, config=None, history_path=None,
          checkpoint_path=None):
    """Train a regressor of the given kind on a G2 sample batch.

    `labels` assigns each record to a split (0 train, 1 validation, 2 test);
    normalisation statistics come from the training split only.  Returns
    (DenseModel, history) with per-epoch losses in normalized output space.
    """
    config = config or TrainConfig()
    X = np.asarray(batch.input19, dtype=np.float64)
    Y = targets_for(kind, batch)
    if config.onehot:
        X = onehot_patch(X)
    train_idx = np.where(labels == 0)[0]
    val_idx = np.where(labels == 1)[0]
    if len(train_idx) == 0:
        raise ValueError("empty training split")
    stats = NormStats.fit(X[train_idx], Y[train_idx])
    Xn = stats.normalize_in(X)
    Yn = stats.normalize_out(Y)
    net = DenseNet([X.shape[1], *config.widths, Y.shape[1]],
                   activation=config.activation, seed=config.seed)
    opt = Adam(net, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    history = []
    model = DenseModel(kind, net, stats, onehot=config.onehot)
    for epoch in range(config.epochs):
        lr_now = step_decay(config.lr, epoch, config.lr_step, config.lr_factor)
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            out, cache = net.forward_cache(Xn[rows])
            _, d_resid = huber_residual_loss(out - Yn[rows], config.huber_delta)
            dWs, dbs, _ = net.backward(cache, d_resid)
            opt.step(dWs, dbs, lr=lr_now)
        tr_loss = _eval_loss(net, Xn, Yn, train_idx, config)
        va_loss = _eval_loss(net, Xn, Yn, val_idx, config) if len(val_idx) else np.nan
        history.append((epoch + 1, tr_loss, va_loss))
        if not np.isfinite(tr_loss):
            if checkpoint_path:
                model.save(checkpoint_path, meta={"epoch": epoch + 1,
                                                  "aborted": True})
            raise RuntimeError(f"non-finite loss at epoch {epoch + 1}; aborted")
        logger.info("%s epoch %d: train=%.4g val=%.4g lr=%.2g",
                    kind, epoch + 1, tr_loss, va_loss, lr_now)
    if history_path:
        write_history(history_path, history)
    if checkpoint_path:
        model.save(checkpoint_path, meta={"epochs": config.epochs,
                                          "seed": config.seed})
    return model, history


def _eval_loss(net, Xn, Yn, idx, config, chunk=8192):
    if len(idx) == 0:
        return np.nan
    total = 0.0
    for start in range(0, len(idx), chunk):
        rows = idx[start:start + chunk]
        loss, _ = huber_residual_loss(net.forward(Xn[rows]) - Yn[rows],
                                      config.huber_delta)
        total += loss * len(rows)
    return total / len(idx)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row[0], f"{row[1]:.10e}", f"{row[2]:.10e}"])


def normalized_mse(model, X, Y_raw):
    """Mean squared error in the standardized output space (scale-free)."""
    X = np.atleast_2d(X)
    if model.onehot:
        X = onehot_patch(X)
    pred_n = model.net.forward(model.stats.normalize_in(X))
    true_n = model.stats.normalize_out(Y_raw)
    return float(np.mean((pred_n - true_n) ** 2))


def per_component_pmcc(pred, true):
    """Product-moment correlation per output component."""
    pred = np.atleast_2d(pred)
    true = np.atleast_2d(true)
    pm = pred - pred.mean(axis=0)
    tm = true - true.mean(axis=0)
    num = np.sum(pm * tm, axis=0)
    den = np.sqrt(np.sum(pm ** 2, axis=0) * np.sum(tm ** 2, axis=0))
    den = np.where(den < 1e-300, 1.0, den)
    return num / den


# ---------------------------------------------------------------------------
# Metric-space loss (exercises the Cholesky head end to end)

def metric_space_loss(model, X, g_target, with_grad=False):
    """MSE between reassembled predictions L L^T and target metrics.

    Differentiates through the softplus diagonal map, the Cholesky
    reassembly and the denormalisation; used by the gradient-check suite and
    available as an evaluation metric.
    """
    X = np.atleast_2d(X)
    g_target = np.asarray(g_target)
    if model.onehot:
        X = onehot_patch(X)
    Xn = model.stats.normalize_in(X)
    out_n, cache = model.net.forward_cache(Xn)
    raw = model.stats.denormalize_out(out_n)
    vals = raw.copy()
    vals[:, _DIAG_POS] = softplus(vals[:, _DIAG_POS])
    L = np.zeros((len(raw), 7, 7))
    L[:, _TRIL[0], _TRIL[1]] = vals
    g_pred = L @ L.transpose(0, 2, 1)
    resid = g_pred - g_target
    loss = float(np.mean(resid ** 2))
    if not with_grad:
        return loss
    dG = 2.0 * resid / resid.size
    dL = (dG + dG.transpose(0, 2, 1)) @ L
    d_vals = dL[:, _TRIL[0], _TRIL[1]]
    d_raw = d_vals.copy()
    d_raw[:, _DIAG_POS] *= softplus_grad(raw[:, _DIAG_POS])
    d_out_n = d_raw * np.sqrt(model.stats.out_var)
    dWs, dbs, _ = model.net.backward(cache, d_out_n)
    return loss, (dWs, dbs)
