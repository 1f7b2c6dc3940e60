"""Train the two link regressors: 19 inputs -> 35 3-form components, and
19 inputs -> 28 Cholesky components of the induced metric (structurally
positive-semidefinite predictions).

A small-scale run for demonstration; the acceptance pipeline uses 50k records,
(512, 512, 256, 256) widths and 150 epochs.

Run:  python3 demos/05_train_g2_regressors.py
"""
import tempfile

import numpy as np

import g2link.dataset as ds
import g2link.pipeline as pl
import g2link.regressor as rg

out = tempfile.mkdtemp(prefix="g2link_demo_")
points = pl.cmd_sample(1500, 3, out)
ds_path = pl.cmd_build_dataset(points, out, mode="fs", thetas=5, seed=3)
batch, header = ds.load_dataset(ds_path)
labels = ds.split_assign(len(batch), header.seed)
print("records:", len(batch), " split:", np.bincount(labels, minlength=3))

config = rg.TrainConfig(widths=(128, 128), epochs=40, batch_size=256,
                        lr=2e-3, seed=5, lr_step=20)
for kind in ("form", "metric"):
    model, hist = rg.train(kind, batch, labels, config)
    te = labels == 2
    X = np.asarray(batch.input19)[te]
    Y = rg.targets_for(kind, batch)[te]
    mse = rg.normalized_mse(model, X, Y)
    pred = model.predict_raw(X)
    pmcc = rg.per_component_pmcc(pred, Y)
    print(f"\n[{kind}] val-loss curve: {hist[0][2]:.3e} -> {hist[-1][2]:.3e}")
    print(f"[{kind}] test normalized MSE: {mse:.3e}; "
          f"per-component PMCC: min {pmcc.min():.4f} median "
          f"{np.median(pmcc):.4f}")
    if kind == "metric":
        g = rg.predict_metric_batch(model, X)
        print("[metric] positive-definite predictions: %.2f%%"
              % (100.0 * np.mean(np.linalg.eigvalsh(g).min(axis=-1) > 0)))
