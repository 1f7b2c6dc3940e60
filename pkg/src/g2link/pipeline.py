"""End-to-end orchestration: sampling, training, dataset builds, verification
and epsilon sweeps, each stage reading the previous stage's artifact file.

Every command is deterministic given --seed and writes a JSON manifest
(command, configuration, input hashes, package version) next to its outputs.
"""
import argparse
import logging
import os

import numpy as np

from . import cy_metric, dataset, link, quintic, regressor, verify
from .ned import FormEvaluator, SweepResult, label_regimes, ned
from .verify import model_evaluators, _chart_data_from_records

logger = logging.getLogger("g2link.pipeline")

DEFAULT_SPLIT = (0.9, 0.05, 0.05)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Stages

def cmd_sample(count, seed, out_dir):
    """Sample quintic points and write the point file."""
    ensure_dir(out_dir)
    batch = quintic.sample_batch(count, seed)
    path = os.path.join(out_dir, "points.bin")
    dataset.save_points(path, batch, seed)
    dataset.write_manifest(os.path.join(out_dir, "manifest_sample.json"),
                           "sample", {"count": count, "seed": seed})
    logger.info("wrote %d points to %s", len(batch), path)
    return path


def cmd_train_cy(points_path, out_dir, epochs=50, seed=0, widths=(64, 64, 64, 64),
                 lr=1e-3, batch_size=1024):
    """Train the Fubini-Study correction net on sampled points."""
    ensure_dir(out_dir)
    points, _ = dataset.load_points(points_path)
    data = cy_metric.CyTrainingData(points)
    state = cy_metric.new_train_state(widths=widths, lr=lr, seed=seed)
    ckpt = os.path.join(out_dir, "cy_model.bin")
    state = cy_metric.train_cy(state, data, epochs, lr=lr, batch_size=batch_size,
                               seed=seed, checkpoint_every=max(epochs // 5, 1),
                               checkpoint_path=ckpt)
    cy_metric.save_correction_net(ckpt, state.net,
                                  meta={"epoch": state.epoch,
                                        "kappa": state.kappa})
    state.write_history(os.path.join(out_dir, "cy_loss.csv"))
    dataset.write_manifest(os.path.join(out_dir, "manifest_train_cy.json"),
                           "train-cy",
                           {"epochs": epochs, "seed": seed, "lr": lr,
                            "widths": list(widths), "batch_size": batch_size},
                           inputs={"points": points_path})
    logger.info("correction net trained for %d epochs -> %s", epochs, ckpt)
    return ckpt


def build_g2_dataset(points, mode="fs", cy_net=None, thetas=5, seed=0,
                     upsilon_norm="global", c_eta=1.0, calibration_points=200):
    """Assemble a G2 sample batch from base points; returns (batch, header).

    The Kahler scale is calibrated once by least squares of NED(eta) against
    the Fubini-Study Kahler pullback and applied to the base Hermitian
    metric, so d(eta) = omega holds exactly in FS mode while eta(Reeb) = 1.
    """
    w, ze = points.chart_data()
    h_fs = quintic.fs_pullback(w, ze, points.a, points.e)
    scale = link.calibrate_kahler_scale(w, ze, points.a, points.e,
                                        max_points=min(calibration_points,
                                                       len(points)))
    if mode == "fs":
        h_raw = h_fs
    elif mode == "nn":
        if cy_net is None:
            raise ValueError("nn mode needs a trained correction net")
        h_raw = cy_metric.predict_metric_batch(cy_net, points.z, points.a,
                                               points.e, h_fs)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    h_used = scale * h_raw
    c = quintic.residue_coeff(ze, points.a, points.e)
    det_h = np.real(np.linalg.det(h_used))
    if upsilon_norm == "global":
        lam = link.normalize_upsilon(c, det_h)
        lam_rows = lam
    elif upsilon_norm == "pointwise":
        lam = float("nan")
        lam_rows = link.pointwise_upsilon_scale(c, det_h)
    else:
        raise ValueError(f"unknown upsilon normalization {upsilon_norm!r}")
    rng = np.random.default_rng(seed)
    T = int(thetas)
    angles = link.fibre_angles(T, len(points), rng)
    rep = lambda arr: np.repeat(arr, T, axis=0)  # noqa: E731
    lam_arg = lam_rows if np.isscalar(lam_rows) else rep(lam_rows)
    batch = link.assemble_g2_batch(rep(w), rep(ze), rep(points.a),
                                   rep(points.e), angles, rep(h_used), rep(c),
                                   lam_arg, c_eta=c_eta)
    header = dataset.DatasetHeader(mode, upsilon_norm, len(batch), seed,
                                   c_eta, float(lam), scale)
    return batch, header


def cmd_build_dataset(points_path, out_dir, mode="fs", cy_model=None, thetas=5,
                      seed=0, upsilon_norm="global"):
    """Build and write a G2 dataset from a point file."""
    ensure_dir(out_dir)
    points, _ = dataset.load_points(points_path)
    cy_net = None
    inputs = {"points": points_path}
    if mode == "nn":
        cy_net, _ = cy_metric.load_correction_net(cy_model)
        inputs["cy_model"] = cy_model
    batch, header = build_g2_dataset(points, mode=mode, cy_net=cy_net,
                                     thetas=thetas, seed=seed,
                                     upsilon_norm=upsilon_norm)
    path = os.path.join(out_dir, f"dataset_{mode}.bin")
    dataset.save_dataset(path, batch, header)
    dataset.write_manifest(
        os.path.join(out_dir, f"manifest_dataset_{mode}.json"), "build-dataset",
        {"mode": mode, "thetas": thetas, "seed": seed,
         "upsilon_norm": upsilon_norm, "lam": header.lam,
         "kahler_scale": header.kahler_scale, "count": len(batch)},
        inputs=inputs)
    logger.info("wrote %d records (%s mode) to %s", len(batch), mode, path)
    return path


def cmd_train_g2(dataset_path, kind, out_dir, epochs=150, seed=0,
                 widths=(512, 512, 256, 256), lr=1e-3, batch_size=1024,
                 split=DEFAULT_SPLIT, huber_delta=np.inf, onehot=False,
                 lr_step=50, lr_factor=0.5):
    """Train a form or metric regressor on a dataset file."""
    ensure_dir(out_dir)
    batch, header = dataset.load_dataset(dataset_path)
    labels = dataset.split_assign(len(batch), header.seed, split)
    config = regressor.TrainConfig(widths=tuple(widths), lr=lr,
                                   batch_size=batch_size, epochs=epochs,
                                   huber_delta=huber_delta, seed=seed,
                                   onehot=onehot, lr_step=lr_step,
                                   lr_factor=lr_factor)
    ckpt = os.path.join(out_dir, f"model_{kind}.bin")
    history_path = os.path.join(out_dir, f"loss_{kind}.csv")
    model, history = regressor.train(kind, batch, labels, config,
                                     history_path=history_path,
                                     checkpoint_path=ckpt)
    dataset.write_manifest(os.path.join(out_dir, f"manifest_train_{kind}.json"),
                           "train-g2",
                           {"kind": kind, "epochs": epochs, "seed": seed,
                            "widths": list(widths), "lr": lr,
                            "batch_size": batch_size, "split": list(split)},
                           inputs={"dataset": dataset_path})
    logger.info("%s model trained to val loss %.3e -> %s", kind,
                history[-1][2], ckpt)
    return ckpt


def _load_models(form_model=None, metric_model=None, cy_model=None):
    fm = mm = None
    hermitian_fn = None
    if form_model:
        fm, _ = regressor.DenseModel.load(form_model)
    if metric_model:
        mm, _ = regressor.DenseModel.load(metric_model)
    if cy_model:
        net, _ = cy_metric.load_correction_net(cy_model)
        hermitian_fn = cy_metric.hermitian_fn_from_net(net)
    return fm, mm, hermitian_fn


def cmd_verify(dataset_path, out_dir, form_model=None, metric_model=None,
               cy_model=None, n_ned=100, eps=1e-5, seed=0):
    """Run the verification suite; model checks only when models are given."""
    ensure_dir(out_dir)
    batch, header = dataset.load_dataset(dataset_path)
    fm, mm, hermitian_fn = _load_models(form_model, metric_model, cy_model)
    if header.mode == "nn" and hermitian_fn is None and (fm or mm):
        logger.warning("nn-mode dataset verified without its correction net; "
                       "omega comparisons use the FS pullback")
    report = verify.verify_dataset(batch, header, out_dir=out_dir,
                                   form_model=fm, metric_model=mm,
                                   hermitian_fn=hermitian_fn, n_ned=n_ned,
                                   eps_models=eps, seed=seed)
    inputs = {"dataset": dataset_path}
    for name, p in (("form_model", form_model), ("metric_model", metric_model),
                    ("cy_model", cy_model)):
        if p:
            inputs[name] = p
    dataset.write_manifest(os.path.join(out_dir, "manifest_verify.json"),
                           "verify", {"n_ned": n_ned, "eps": eps, "seed": seed},
                           inputs=inputs)
    logger.info("verification: wedge median ratio %.6f, volume PMCC %.6f",
                report.wedge["median_ratio"], report.volume["pmcc"])
    return report


def cmd_sweep_eps(dataset_path, out_dir, form_model=None, metric_model=None,
                  cy_model=None, eps_grid=None, n_points=25, seed=0):
    """Epsilon sweeps of the NED over record subsets; one CSV per form.

    The default grid reaches 1e-22: float64 central differences only
    degenerate exactly (the collapse regime) once eps falls below the ulp of
    the smallest chart coordinate in play, which for generic points is far
    below the 1e-16 scale of order-one coordinates.
    """
    ensure_dir(out_dir)
    if eps_grid is None:
        eps_grid = np.logspace(-22, 0, 45)
    batch, header = dataset.load_dataset(dataset_path)
    fm, mm, hermitian_fn = _load_models(form_model, metric_model, cy_model)
    rng = np.random.default_rng(seed)
    chart_cache = _chart_data_from_records(batch)
    w, ze, theta, a, e = chart_cache
    idx = rng.choice(len(batch), size=min(n_points, len(batch)), replace=False)
    results = {}

    def run_sweep(name, make_eval):
        evals, centers = [], []
        for i in idx:
            ev_pack = make_eval(i)
            if ev_pack is None:
                continue
            evaluator, u0 = ev_pack
            evals.append(evaluator)
            centers.append(u0)
        # one merged sweep: median across all (point, form) evaluations
        medians = []
        for eps in sorted(eps_grid):
            norms = []
            for evaluator, u0 in zip(evals, centers):
                try:
                    norms.append(float(np.linalg.norm(
                        ned(evaluator, u0, float(eps)).coeffs)))
                except Exception as exc:  # noqa: BLE001
                    logger.warning("sweep failure (%s, eps=%.1e): %s", name,
                                   eps, exc)
            medians.append(float(np.median(norms)) if norms else np.nan)
        res = SweepResult(sorted(float(x) for x in eps_grid), medians,
                          label_regimes(sorted(eps_grid), medians))
        res.write_csv(os.path.join(out_dir, f"sweep_{name}.csv"))
        results[name] = res

    if fm is not None and mm is not None:
        def make_phi(i):
            _, u0, phi_eval, _ = model_evaluators(batch, header, i, fm, mm,
                                                  hermitian_fn=hermitian_fn,
                                                  chart_cache=chart_cache)
            return phi_eval, u0

        def make_psi(i):
            _, u0, _, psi_eval = model_evaluators(batch, header, i, fm, mm,
                                                  hermitian_fn=hermitian_fn,
                                                  chart_cache=chart_cache)
            return psi_eval, u0
        run_sweep("phi_model", make_phi)
        run_sweep("psi_model", make_psi)
    if hermitian_fn is not None:
        def make_omega(i):
            ev = verify._record_evaluator(batch, header, i, w, ze, a, e,
                                          hermitian_fn)
            u0 = link.chart_center(w[i:i + 1], ze[i:i + 1], theta[i])
            return FormEvaluator(ev.omega_at, 2, chart=ev.chart), u0
        run_sweep("omega_model", make_omega)
    if fm is None and mm is None and hermitian_fn is None:
        def make_exact(which):
            def factory(i):
                ev = verify._record_evaluator(batch, header, i, w, ze, a, e)
                u0 = link.chart_center(w[i:i + 1], ze[i:i + 1], theta[i])
                return getattr(ev, f"{which}_evaluator")(), u0
            return factory
        run_sweep("phi_exact", make_exact("phi"))
        run_sweep("psi_exact", make_exact("psi"))
    dataset.write_manifest(os.path.join(out_dir, "manifest_sweep.json"),
                           "sweep-eps",
                           {"eps_min": float(min(eps_grid)),
                            "eps_max": float(max(eps_grid)),
                            "eps_count": len(list(eps_grid)),
                            "n_points": n_points, "seed": seed},
                           inputs={"dataset": dataset_path})
    return results


# ---------------------------------------------------------------------------
# Command line interface

def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True, help="output directory")


def main(argv=None):
    logging.basicConfig(format="%(name)s:%(levelname)s:%(message)s",
                        level=logging.INFO)
    parser = argparse.ArgumentParser(
        prog="g2link",
        description="Coclosed G2-structures on the quintic link: sampling, "
                    "training, verification")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("sample", help="sample quintic points")
    p.add_argument("--count", type=int, default=10000)
    _add_common(p)

    p = subs.add_parser("train-cy", help="train the FS correction net")
    p.add_argument("--points", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--widths", type=int, nargs="+", default=[64, 64, 64, 64])
    _add_common(p)

    p = subs.add_parser("build-dataset", help="assemble G2 samples on the link")
    p.add_argument("--points", required=True)
    p.add_argument("--mode", choices=["fs", "nn"], default="fs")
    p.add_argument("--cy-model", default=None)
    p.add_argument("--thetas", type=int, default=5)
    p.add_argument("--upsilon", choices=["global", "pointwise"],
                   default="global")
    _add_common(p)

    p = subs.add_parser("train-g2", help="train a form or metric regressor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=["form", "metric"], required=True)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--widths", type=int, nargs="+",
                   default=[512, 512, 256, 256])
    p.add_argument("--split", default="0.9:0.05:0.05")
    p.add_argument("--huber-delta", type=float, default=np.inf)
    p.add_argument("--onehot-patch", action="store_true")
    p.add_argument("--lr-step", type=int, default=50,
                   help="epochs between learning-rate halvings")
    p.add_argument("--lr-factor", type=float, default=0.5)
    _add_common(p)

    p = subs.add_parser("verify", help="verification report for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--form-model", default=None)
    p.add_argument("--metric-model", default=None)
    p.add_argument("--cy-model", default=None)
    p.add_argument("--n-ned", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-5)
    _add_common(p)

    p = subs.add_parser("sweep-eps", help="NED epsilon sweep")
    p.add_argument("--dataset", required=True)
    p.add_argument("--form-model", default=None)
    p.add_argument("--metric-model", default=None)
    p.add_argument("--cy-model", default=None)
    p.add_argument("--eps-min", type=float, default=1e-22)
    p.add_argument("--eps-max", type=float, default=1.0)
    p.add_argument("--eps-count", type=int, default=45)
    p.add_argument("--n-points", type=int, default=25)
    _add_common(p)

    args = parser.parse_args(argv)
    if args.command == "sample":
        cmd_sample(args.count, args.seed, args.out)
    elif args.command == "train-cy":
        cmd_train_cy(args.points, args.out, epochs=args.epochs, seed=args.seed,
                     widths=tuple(args.widths), lr=args.lr,
                     batch_size=args.batch_size)
    elif args.command == "build-dataset":
        cmd_build_dataset(args.points, args.out, mode=args.mode,
                          cy_model=args.cy_model, thetas=args.thetas,
                          seed=args.seed, upsilon_norm=args.upsilon)
    elif args.command == "train-g2":
        cmd_train_g2(args.dataset, args.kind, args.out, epochs=args.epochs,
                     seed=args.seed, widths=tuple(args.widths), lr=args.lr,
                     batch_size=args.batch_size,
                     split=dataset.parse_fractions(args.split),
                     huber_delta=args.huber_delta, onehot=args.onehot_patch,
                     lr_step=args.lr_step, lr_factor=args.lr_factor)
    elif args.command == "verify":
        cmd_verify(args.dataset, args.out, form_model=args.form_model,
                   metric_model=args.metric_model, cy_model=args.cy_model,
                   n_ned=args.n_ned, eps=args.eps, seed=args.seed)
    elif args.command == "sweep-eps":
        grid = np.logspace(np.log10(args.eps_min), np.log10(args.eps_max),
                           args.eps_count)
        cmd_sweep_eps(args.dataset, args.out, form_model=args.form_model,
                      metric_model=args.metric_model, cy_model=args.cy_model,
                      eps_grid=grid, n_points=args.n_points, seed=args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
