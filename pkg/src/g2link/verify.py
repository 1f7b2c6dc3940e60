"""Verification suite: algebraic identities, torsion via the numerical
exterior derivative, volume correlation, and figure-data emission."""
import csv
import json
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import regressor
from .dataset import split_assign
from .forms import hodge_star_batch, wedge_batch
from .link import ChartEvaluator, chart_center
from .ned import FormEvaluator, NedEvaluationError, ned
from .quintic import affine_chart, solve_ze

logger = logging.getLogger("g2link.verify")

WEDGE_TARGET = 7.0


def _chart_data_from_records(batch):
    """Recover (w, ze, theta) of each record from its ambient coordinates."""
    x = np.asarray(batch.input19[:, :10])
    z = x[:, 0::2] + 1j * x[:, 1::2]
    a = batch.patch[:, 0].astype(np.int64)
    e = batch.patch[:, 1].astype(np.int64)
    w, ze = affine_chart(z, a, e)
    theta = np.angle(z[np.arange(len(z)), a])
    return w, ze, theta, a, e


def wedge_ratio(batch):
    """Pointwise ratio (phi ^ psi) / vol_g2 across a batch."""
    top = wedge_batch(7, 3, 4, batch.phi, batch.psi)[:, 0]
    return top / batch.vol_g2


def wedge_identity_stats(batch):
    ratio = wedge_ratio(batch)
    dev = np.abs(ratio - WEDGE_TARGET)
    return {"mean_ratio": float(ratio.mean()),
            "median_ratio": float(np.median(ratio)),
            "mean_abs_dev": float(dev.mean()),
            "median_abs_dev": float(np.median(dev)),
            "max_abs_dev": float(dev.max())}


def hodge_crosscheck(batch, rel_tol=1e-5, chunk=2048):
    """Relative distance between *_g phi and the stored structural psi."""
    worst = 0.0
    n_ok = 0
    total = len(batch)
    g = batch.metrics()
    for start in range(0, total, chunk):
        sl = slice(start, min(start + chunk, total))
        star = hodge_star_batch(batch.phi[sl], g[sl], 3)
        rel = (np.linalg.norm(star - batch.psi[sl], axis=1)
               / np.linalg.norm(batch.psi[sl], axis=1))
        worst = max(worst, float(rel.max()))
        n_ok += int((rel <= rel_tol).sum())
    return {"fraction_within_tol": n_ok / total, "rel_tol": rel_tol,
            "max_rel_dev": worst}


def volume_correlation(batch):
    """PMCC, least-squares slope and intercept of vol_g2 against vol_cy."""
    x = batch.vol_cy
    y = batch.vol_g2
    pmcc = float(np.corrcoef(x, y)[0, 1])
    slope, intercept = np.polyfit(x, y, 1)
    return {"pmcc": pmcc, "slope": float(slope), "intercept": float(intercept)}


def _record_evaluator(batch, header, i, w, ze, a, e, hermitian_fn=None):
    return ChartEvaluator(a[i], e[i], ze[i], lam=header.lam,
                          kahler_scale=header.kahler_scale, c_eta=header.c_eta,
                          hermitian_fn=hermitian_fn)


def contact_condition(batch, header, n_points=100, eps=1e-4, rng=None):
    """eta ^ (d eta)^3 over a record subset, with d(eta) from the NED."""
    rng = rng or np.random.default_rng(0)
    w, ze, theta, a, e = _chart_data_from_records(batch)
    idx = rng.choice(len(batch), size=min(n_points, len(batch)), replace=False)
    tops = []
    for i in idx:
        ev = _record_evaluator(batch, header, i, w, ze, a, e)
        u0 = chart_center(w[i:i + 1], ze[i:i + 1], theta[i])
        d_eta = ned(ev.eta_evaluator(), u0, eps).coeffs
        eta = ev.eta_at(u0)
        deta_sq = wedge_batch(7, 2, 2, d_eta, d_eta)
        deta_cube = wedge_batch(7, 2, 4, d_eta, deta_sq)
        top = wedge_batch(7, 1, 6, eta, deta_cube)[0, 0]
        tops.append(top)
    tops = np.asarray(tops)
    return {"n_points": len(tops), "min_abs": float(np.abs(tops).min()),
            "median_abs": float(np.median(np.abs(tops))),
            "all_nonzero": bool(np.all(np.abs(tops) > 1e-8)),
            "sign_consistent": bool(np.all(np.sign(tops) == np.sign(tops[0])))}


def contact_condition_all(batch, header, eps=1e-4):
    """Vectorized eta ^ (d eta)^3 at every record, d(eta) from central
    differences of the batched contact pullback."""
    w, ze, theta, a, e = _chart_data_from_records(batch)
    from .link import link_chart
    N = len(batch)
    eta0 = header.c_eta * link_chart(w, ze, theta)[2]
    # central differences of the 7 eta coefficients along the 7 chart axes;
    # theta displacements leave eta invariant, so only 6 base axes are live
    d_eta = np.zeros((N, 21))
    from .forms import multi_indices, rank_of
    diffs = np.zeros((N, 7, 7))  # axis, coefficient
    for axis in range(6):
        for sign in (+1.0, -1.0):
            w_disp = w.copy()
            col, im_part = divmod(axis, 2)
            w_disp[:, col] = w_disp[:, col] + sign * eps * (1j if im_part else 1.0)
            ze_disp = solve_ze(w_disp, ze)
            eta_disp = header.c_eta * link_chart(w_disp, ze_disp, theta)[2]
            diffs[:, axis] += sign * eta_disp / (2.0 * eps)
    for r, (i, j) in enumerate(multi_indices(7, 2)):
        d_eta[:, r] = diffs[:, i, j] - diffs[:, j, i]
    deta_sq = wedge_batch(7, 2, 2, d_eta, d_eta)
    deta_cube = wedge_batch(7, 2, 4, d_eta, deta_sq)
    return wedge_batch(7, 1, 6, eta0, deta_cube)[:, 0]


def torsion_exact(batch, header, n_points=100, eps=1e-4, rng=None,
                  hermitian_fn=None):
    """Torsion of the exact (analytic) structure via NED on a record subset.

    The coclosed identities are d(psi) = 0 and d(phi) = omega ^ omega; the
    report carries medians of both defects normalized by the relevant scale.
    """
    rng = rng or np.random.default_rng(1)
    w, ze, theta, a, e = _chart_data_from_records(batch)
    idx = rng.choice(len(batch), size=min(n_points, len(batch)), replace=False)
    dpsi_n, psi_n, dphi_err, omsq_n = [], [], [], []
    failures = 0
    for i in idx:
        try:
            ev = _record_evaluator(batch, header, i, w, ze, a, e, hermitian_fn)
            u0 = chart_center(w[i:i + 1], ze[i:i + 1], theta[i])
            omega = ev.omega_at(u0)
            omsq = wedge_batch(7, 2, 2, omega, omega)[0]
            dpsi = ned(ev.psi_evaluator(), u0, eps).coeffs
            dphi = ned(ev.phi_evaluator(), u0, eps).coeffs
        except (NedEvaluationError, ValueError) as exc:
            failures += 1
            logger.warning("torsion NED failure at record %d: %s", i, exc)
            continue
        dpsi_n.append(np.linalg.norm(dpsi))
        psi_n.append(np.linalg.norm(ev.psi_at(u0)))
        dphi_err.append(np.linalg.norm(dphi - omsq))
        omsq_n.append(np.linalg.norm(omsq))
    return {"eps": eps, "n_points": len(dpsi_n), "ned_failures": failures,
            "median_dpsi": float(np.median(dpsi_n)),
            "median_psi_norm": float(np.median(psi_n)),
            "median_dphi_minus_omsq": float(np.median(dphi_err)),
            "median_omsq_norm": float(np.median(omsq_n))}


def model_evaluators(batch, header, i, form_model, metric_model=None,
                     hermitian_fn=None, chart_cache=None):
    """NED evaluators of the trained models anchored at one record's chart.

    phi comes from the form model at the chart's 19-dimensional input; psi is
    the Hodge dual of the predicted phi with respect to the predicted metric.
    """
    w, ze, theta, a, e = chart_cache or _chart_data_from_records(batch)
    ev = _record_evaluator(batch, header, i, w, ze, a, e, hermitian_fn)
    u0 = chart_center(w[i:i + 1], ze[i:i + 1], theta[i])

    def phi_at(u7):
        return regressor.predict_phi_batch(form_model, ev.input19_at(u7))[0]

    phi_eval = FormEvaluator(phi_at, 3, chart=ev.chart)
    psi_eval = None
    if metric_model is not None:
        def psi_at(u7):
            x19 = ev.input19_at(u7)
            phi = regressor.predict_phi_batch(form_model, x19)
            g = regressor.predict_metric_batch(metric_model, x19)
            return hodge_star_batch(phi, g, 3)[0]
        psi_eval = FormEvaluator(psi_at, 4, chart=ev.chart)
    return ev, u0, phi_eval, psi_eval


def torsion_models(batch, header, form_model, metric_model, n_points=100,
                   eps=1e-5, rng=None, hermitian_fn=None, test_only=True,
                   split_fractions=(0.9, 0.05, 0.05)):
    """Model-based torsion statistics on test-split records.

    Reports mean +/- sd of |d phi| / |omega ^ omega| and |d psi| (psi the
    Hodge dual of the predicted 3-form by the predicted metric), the MSE
    between d(phi) and omega ^ omega, and the wedge-ratio of the predicted
    structures.
    """
    rng = rng or np.random.default_rng(2)
    chart_cache = _chart_data_from_records(batch)
    if test_only:
        labels = split_assign(len(batch), header.seed, split_fractions)
        pool = np.where(labels == 2)[0]
    else:
        pool = np.arange(len(batch))
    idx = rng.choice(pool, size=min(n_points, len(pool)), replace=False)
    ratios, dpsi_norms, psi_norms, mse_parts, wedge_ratios = [], [], [], [], []
    failures = 0
    for i in idx:
        try:
            ev, u0, phi_eval, psi_eval = model_evaluators(
                batch, header, i, form_model, metric_model,
                hermitian_fn=hermitian_fn, chart_cache=chart_cache)
            omega = ev.omega_at(u0)
            omsq = wedge_batch(7, 2, 2, omega, omega)[0]
            dphi = ned(phi_eval, u0, eps).coeffs
            dpsi = ned(psi_eval, u0, eps).coeffs
        except (NedEvaluationError, ValueError, np.linalg.LinAlgError) as exc:
            failures += 1
            logger.warning("model torsion NED failure at record %d: %s", i, exc)
            continue
        x19 = ev.input19_at(u0)
        phi_pred = regressor.predict_phi_batch(form_model, x19)
        g_pred = regressor.predict_metric_batch(metric_model, x19)
        psi_pred = hodge_star_batch(phi_pred, g_pred, 3)
        vol_pred = np.sqrt(np.linalg.det(g_pred[0]))
        wedge_ratios.append(
            wedge_batch(7, 3, 4, phi_pred, psi_pred)[0, 0] / vol_pred)
        ratios.append(np.linalg.norm(dphi) / np.linalg.norm(omsq))
        mse_parts.append(np.mean((dphi - omsq) ** 2))
        dpsi_norms.append(np.linalg.norm(dpsi))
        psi_norms.append(np.linalg.norm(psi_pred))
    ratios = np.asarray(ratios)
    dpsi_norms = np.asarray(dpsi_norms)
    return {"eps": eps, "n_points": int(len(ratios)), "ned_failures": failures,
            "dphi_over_omsq_mean": float(ratios.mean()),
            "dphi_over_omsq_sd": float(ratios.std()),
            "dpsi_mean": float(dpsi_norms.mean()),
            "dpsi_sd": float(dpsi_norms.std()),
            "dpsi_median": float(np.median(dpsi_norms)),
            "psi_norm_median": float(np.median(psi_norms)),
            "dphi_vs_omsq_mse": float(np.mean(mse_parts)),
            "wedge_ratio_mean": float(np.mean(wedge_ratios)),
            "wedge_ratio_sd": float(np.std(wedge_ratios))}


# ---------------------------------------------------------------------------
# Histograms and the aggregate report

def write_component_histograms(path, data, bins=60):
    """Per-component histogram CSV: component, bin_left, bin_right, count."""
    data = np.asarray(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "bin_left", "bin_right", "count"])
        for comp in range(data.shape[1]):
            counts, edges = np.histogram(data[:, comp], bins=bins)
            for k in range(bins):
                writer.writerow([comp, f"{edges[k]:.8e}", f"{edges[k + 1]:.8e}",
                                 int(counts[k])])


@dataclass
class VerificationReport:
    mode: str
    upsilon_norm: str
    count: int
    wedge: dict = field(default_factory=dict)
    hodge: dict = field(default_factory=dict)
    volume: dict = field(default_factory=dict)
    contact: dict = field(default_factory=dict)
    torsion_exact: dict = field(default_factory=dict)
    torsion_models: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def verify_dataset(batch, header, out_dir=None, form_model=None,
                   metric_model=None, hermitian_fn=None, n_ned=100,
                   eps_exact=1e-4, eps_models=1e-5, seed=0):
    """Full verification pass over a dataset, optionally with trained models.

    Dataset-only checks always run; model-based torsion runs when both
    models are supplied.  NED failures are counted, never fatal.
    """
    rng = np.random.default_rng(seed)
    report = VerificationReport(header.mode, header.upsilon_norm, len(batch))
    report.wedge = wedge_identity_stats(batch)
    report.hodge = hodge_crosscheck(batch)
    report.volume = volume_correlation(batch)
    report.contact = contact_condition(batch, header, n_points=min(n_ned, 200),
                                       eps=eps_exact, rng=rng)
    if header.mode == "fs" and hermitian_fn is None:
        report.torsion_exact = torsion_exact(batch, header, n_points=n_ned,
                                             eps=eps_exact, rng=rng)
    elif hermitian_fn is not None:
        report.torsion_exact = torsion_exact(batch, header, n_points=n_ned,
                                             eps=eps_exact, rng=rng,
                                             hermitian_fn=hermitian_fn)
    if form_model is not None and metric_model is not None:
        report.torsion_models = torsion_models(
            batch, header, form_model, metric_model, n_points=n_ned,
            eps=eps_models, rng=rng, hermitian_fn=hermitian_fn)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_component_histograms(os.path.join(out_dir, "phi_histograms.csv"),
                                   batch.phi)
        write_component_histograms(os.path.join(out_dir, "g_histograms.csv"),
                                   batch.g_lower)
        report.to_json(os.path.join(out_dir, "verification_report.json"))
    return report
