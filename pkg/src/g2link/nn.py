"""Dense feed-forward networks in plain numpy: forward, backprop, Adam.

Everything is deterministic given a seed and runs in float64, which keeps the
finite-difference gradient contracts tight and reproducibility bitwise.
"""
import json
import struct
import zlib

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact Gaussian error linear unit x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


def _gelu_forward(x):
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * phi, phi


def _gelu_backward(x, phi):
    # reuses the cached Gaussian CDF from the forward pass
    return phi + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


def _linear_forward(x):
    return x, None


def _linear_backward(x, aux):
    return 1.0


def identity(x):
    return x


def identity_grad(x):
    return np.ones_like(x)


ACTIVATIONS = {"gelu": (gelu, gelu_grad), "linear": (identity, identity_grad)}
_ACT_PAIRS = {"gelu": (_gelu_forward, _gelu_backward),
              "linear": (_linear_forward, _linear_backward)}


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    # x with softplus(x) = y, stable for both tails
    y = np.asarray(y, dtype=np.float64)
    return y + np.log1p(-np.exp(-y))


def softplus_grad(x):
    return 1.0 / (1.0 + np.exp(-x))


class DenseNet:
    """Fully-connected network with biases and one hidden activation."""

    def __init__(self, sizes, activation="gelu", seed=0, zero_last=False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(int(s) for s in sizes)
        self.activation = activation
        self.act, self.act_grad = ACTIVATIONS[activation]
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))
        if zero_last:
            self.weights[-1][:] = 0.0

    # -- forward / backward -------------------------------------------------
    def forward(self, X):
        A = np.atleast_2d(np.asarray(X, dtype=np.float64))
        for layer in range(len(self.weights) - 1):
            A = self.act(A @ self.weights[layer] + self.biases[layer])
        return A @ self.weights[-1] + self.biases[-1]

    def forward_cache(self, X):
        A = np.atleast_2d(np.asarray(X, dtype=np.float64))
        act_fwd, _ = _ACT_PAIRS[self.activation]
        pre, acts = [], [A]
        for layer in range(len(self.weights) - 1):
            Z = A @ self.weights[layer] + self.biases[layer]
            A, aux = act_fwd(Z)
            pre.append((Z, aux))
            acts.append(A)
        out = A @ self.weights[-1] + self.biases[-1]
        return out, (pre, acts)

    def backward(self, cache, d_out):
        """Parameter gradients given dL/d(output); returns (dWs, dbs, dX)."""
        pre, acts = cache
        _, act_bwd = _ACT_PAIRS[self.activation]
        dWs = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        delta = np.atleast_2d(d_out)
        dWs[-1] = acts[-1].T @ delta
        dbs[-1] = delta.sum(axis=0)
        dA = delta @ self.weights[-1].T
        for layer in range(len(self.weights) - 2, -1, -1):
            Z, aux = pre[layer]
            delta = dA * act_bwd(Z, aux)
            dWs[layer] = acts[layer].T @ delta
            dbs[layer] = delta.sum(axis=0)
            dA = delta @ self.weights[layer].T
        return dWs, dbs, dA

    # -- flat parameter view (finite-difference checks) ---------------------
    def get_flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases)
                               for a in pair])

    def set_flat(self, flat):
        at = 0
        for layer in range(len(self.weights)):
            for arr in (self.weights[layer], self.biases[layer]):
                arr[:] = flat[at:at + arr.size].reshape(arr.shape)
                at += arr.size
        if at != flat.size:
            raise ValueError("flat parameter size mismatch")

    def flat_grad(self, dWs, dbs):
        return np.concatenate([a.ravel() for pair in zip(dWs, dbs) for a in pair])


class Adam:
    """Adaptive-moment optimizer over a DenseNet's parameter list."""

    def __init__(self, net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        params = net.weights + net.biases
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, dWs, dbs, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        grads = dWs + dbs
        params = self.net.weights + self.net.biases
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ---------------------------------------------------------------------------
# Losses and schedules

def huber_residual_loss(resid, delta=np.inf):
    """Mean componentwise Huber penalty and its gradient w.r.t. the residual.

    delta = inf reduces to the plain squared error r^2 (mean squared error).
    """
    resid = np.asarray(resid)
    if np.isinf(delta):
        loss = float(np.mean(resid ** 2))
        grad = 2.0 * resid / resid.size
        return loss, grad
    a = np.abs(resid)
    small = a <= delta
    vals = np.where(small, resid ** 2, 2.0 * delta * a - delta ** 2)
    grad = np.where(small, 2.0 * resid, 2.0 * delta * np.sign(resid)) / resid.size
    return float(np.mean(vals)), grad


def step_decay(lr0, epoch, every=50, factor=0.5):
    return lr0 * factor ** (epoch // every)


def cosine_decay(lr0, epoch, total, floor=0.0):
    if total <= 1:
        return lr0
    frac = min(epoch / (total - 1), 1.0)
    return floor + 0.5 * (lr0 - floor) * (1.0 + np.cos(np.pi * frac))


def finite_diff_grad(fn, net, step=1e-6):
    """Central finite-difference gradient of fn() w.r.t. the net's parameters."""
    flat = net.get_flat()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        flat[i] += step
        net.set_flat(flat)
        up = fn()
        flat[i] -= 2 * step
        net.set_flat(flat)
        dn = fn()
        flat[i] += step
        net.set_flat(flat)
        grad[i] = (up - dn) / (2 * step)
    return grad


# ---------------------------------------------------------------------------
# Checkpoint container

_MAGIC = b"G2LKMDL1"


def save_model(path, kind, net, extras=None, meta=None):
    """Binary checkpoint: magic + version, kind, layer shapes, row-major
    weights, and any auxiliary arrays (normalization statistics etc.)."""
    extras = extras or {}
    meta = meta or {}
    header = {
        "kind": kind,
        "sizes": net.sizes,
        "activation": net.activation,
        "extras": {k: list(v.shape) for k, v in extras.items()},
        "meta": meta,
    }
    head = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(a, dtype=np.float64).tobytes()
                       for pair in zip(net.weights, net.biases) for a in pair)
    payload += b"".join(np.ascontiguousarray(extras[k], dtype=np.float64).tobytes()
                        for k in sorted(extras))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, len(head)))
        fh.write(head)
        fh.write(struct.pack("<QI", len(payload), zlib.crc32(payload)))
        fh.write(payload)


def load_model(path):
    """Read a checkpoint; returns (kind, net, extras, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a model checkpoint: bad magic {magic!r}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        plen, crc = struct.unpack("<QI", fh.read(12))
        payload = fh.read(plen)
    if zlib.crc32(payload) != crc:
        raise ValueError("checkpoint payload checksum mismatch")
    net = DenseNet(header["sizes"], activation=header["activation"])
    at = 0

    def take(shape):
        nonlocal at
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=size, offset=at).reshape(shape)
        at += size * 8
        return arr.copy()

    for layer in range(len(net.weights)):
        net.weights[layer] = take(net.weights[layer].shape)
        net.biases[layer] = take(net.biases[layer].shape)
    extras = {k: take(tuple(shape)) for k, shape in
              sorted(header["extras"].items())}
    return header["kind"], net, extras, header.get("meta", {})
