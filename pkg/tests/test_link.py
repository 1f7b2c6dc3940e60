"""Link lift, contact form, pullbacks, and G2 sample assembly."""
import numpy as np
import pytest

import g2link.link as lk
import g2link.quintic as q
from g2link.forms import (AltForm, hodge_star, hodge_star_batch,
                          metric_from_3form, rank_of, wedge, wedge_batch)
from g2link.ned import ned


@pytest.fixture(scope="module")
def base():
    batch = q.sample_batch(400, seed=11)
    w, ze = batch.chart_data()
    h_fs = q.fs_pullback(w, ze, batch.a, batch.e)
    c = q.residue_coeff(ze, batch.a, batch.e)
    return batch, w, ze, h_fs, c


# ---------------------------------------------------------------------------
# lift and chart Jacobian

def test_lift_theta_zero_canonical(base):
    batch = base[0]
    p = batch[2]
    lp = lk.lift_to_link(p, 0.0)
    zc = q.canonical_representative(p.z[None, :], np.array([p.patch[0]]))[0]
    assert np.allclose(lp.x, q.interleave_real(zc[None, :])[0], atol=1e-12)


def test_lift_unit_norm_random_theta(base):
    batch = base[0]
    rng = np.random.default_rng(0)
    for i in rng.choice(len(batch), 10, replace=False):
        lp = lk.lift_to_link(batch[i], rng.uniform(0, 2 * np.pi))
        assert np.isclose(np.linalg.norm(lp.x), 1.0, atol=1e-12)
        assert np.linalg.matrix_rank(lp.J) == 7


def test_chart_jacobian_finite_difference(base):
    batch, w, ze, _, _ = base
    i = 5
    theta = 1.234
    lp = lk.lift_to_link(batch[i], theta)
    ev = lk.ChartEvaluator(batch.a[i], batch.e[i], ze[i])
    u0 = lk.chart_center(w[i:i + 1], ze[i:i + 1], theta)

    def chart_map(u7):
        p = ev._pieces(u7)
        return lk.scatter_chart_rows(p["x_loc"], p["a"], p["e"])[0]

    eps = 1e-6
    for axis in range(7):
        up, um = u0.copy(), u0.copy()
        up[axis] += eps
        um[axis] -= eps
        fd = (chart_map(up) - chart_map(um)) / (2 * eps)
        assert np.allclose(fd, lp.J[axis], atol=1e-6)


# ---------------------------------------------------------------------------
# contact form

def test_contact_form_reeb_pairing(base):
    batch = base[0]
    rng = np.random.default_rng(1)
    for i in rng.choice(len(batch), 20, replace=False):
        lp = lk.lift_to_link(batch[i], rng.uniform(0, 2 * np.pi))
        eta = lk.contact_form(lp)
        assert np.isclose(eta.coeffs[6], 1.0, atol=1e-9)


def test_contact_form_theta_independent(base):
    batch = base[0]
    lp1 = lk.lift_to_link(batch[7], 0.3)
    lp2 = lk.lift_to_link(batch[7], 4.1)
    assert np.allclose(lk.contact_form(lp1).coeffs,
                       lk.contact_form(lp2).coeffs, atol=1e-12)


def test_contact_form_ned_matches_scaled_fs(base):
    # NED(eta) converges at rate eps^2 to the Kahler-scale multiple of omega
    batch, w, ze, h_fs, _ = base
    i = 3
    ev = lk.ChartEvaluator(batch.a[i], batch.e[i], ze[i])
    u0 = lk.chart_center(w[i:i + 1], ze[i:i + 1], 0.0)
    omega = ev.omega_at(u0)
    errs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        d_eta = ned(ev.eta_evaluator(), u0, eps).coeffs
        errs.append(np.linalg.norm(d_eta - 2.0 * omega))
    errs = np.asarray(errs)
    assert errs[0] > 0
    rates = errs[:-1] / errs[1:]
    assert np.all(rates > 3.0)  # second order: halving eps ~ quarter error


def test_calibrate_kahler_scale(base):
    batch, w, ze, _, _ = base
    s = lk.calibrate_kahler_scale(w, ze, batch.a, batch.e, max_points=25)
    assert np.isclose(s, 2.0, rtol=1e-5)


# ---------------------------------------------------------------------------
# base-form pullbacks

def test_kahler_identity_pattern():
    om = lk.pullback_base_2form(np.eye(3))
    expect = (AltForm.basis(7, (0, 1)) + AltForm.basis(7, (2, 3))
              + AltForm.basis(7, (4, 5)))
    assert np.allclose(om.coeffs, expect.coeffs)


def test_kahler_theta_components_vanish(base):
    _, _, _, h_fs, _ = base
    om = lk.kahler_coeffs(h_fs)
    from g2link.forms import multi_indices
    for r, I in enumerate(multi_indices(7, 2)):
        if 6 in I:
            assert np.all(om[:, r] == 0.0)


def test_kahler_cube_determinant(base):
    _, _, _, h_fs, _ = base
    om = lk.kahler_coeffs(h_fs)
    om3 = wedge_batch(7, 2, 4, om, wedge_batch(7, 2, 2, om, om))
    det_h = np.real(np.linalg.det(h_fs))
    assert np.allclose(om3[:, lk.TOP6_RANK] / 6.0, det_h, rtol=1e-9)


def test_base_metric_real_consistency(base):
    _, _, _, h_fs, _ = base
    g6 = lk.base_metric_real(h_fs)
    assert np.allclose(g6, g6.transpose(0, 2, 1), atol=1e-13)
    assert np.linalg.eigvalsh(g6).min() > 0
    assert np.allclose(np.linalg.det(g6), np.real(np.linalg.det(h_fs)) ** 2,
                       rtol=1e-9)


# ---------------------------------------------------------------------------
# holomorphic volume form pullback

def test_upsilon_real_pattern():
    re, im = lk.upsilon_coeffs(np.array([1.0 + 0.0j]))
    expect_re = np.zeros(35)
    for idx, s in (((0, 2, 4), 1), ((0, 3, 5), -1), ((1, 2, 5), -1),
                   ((1, 3, 4), -1)):
        expect_re[rank_of(idx, 7)] = s
    assert np.allclose(re[0], expect_re)
    # theta-components vanish for both parts
    from g2link.forms import multi_indices
    for r, I in enumerate(multi_indices(7, 3)):
        if 6 in I:
            assert re[0, r] == 0.0 and im[0, r] == 0.0


def test_upsilon_quarter_turn():
    # with the orientation convention im = -Im(.), multiplying the scale by i
    # maps (re, im) -> (im, -re); a quarter turn either way is consistent
    c = np.array([0.7 - 0.2j])
    re, im = lk.upsilon_coeffs(c)
    re_i, im_i = lk.upsilon_coeffs(1j * c)
    assert np.allclose(re_i, im)
    assert np.allclose(im_i, -re)


def test_pullback_upsilon_front_end():
    hv = q.HoloVolSample(0.3 + 0.1j)
    re_u, im_u = lk.pullback_upsilon(hv, lam=2.0)
    re2, im2 = lk.upsilon_coeffs(np.array([2.0 * (0.3 + 0.1j)]))
    assert np.allclose(re_u.coeffs, re2[0])
    assert np.allclose(im_u.coeffs, im2[0])


# ---------------------------------------------------------------------------
# Upsilon normalization

def test_normalize_upsilon_flat_model():
    # synthetic flat data: |c|^2 = det h -> lambda = 1
    c = np.full(2000, 1.0 + 0.0j)
    det_h = np.ones(2000)
    lam = lk.normalize_upsilon(c, det_h)
    assert np.isclose(lam, 1.0)


def test_normalize_upsilon_scaling_law(base):
    batch, w, ze, h_fs, c = base
    det1 = np.real(np.linalg.det(h_fs))
    lam1 = lk.normalize_upsilon(c, det1)
    lam2 = lk.normalize_upsilon(c, np.real(np.linalg.det(2.0 * h_fs)))
    assert np.isclose(lam2 / lam1, 2.0 ** 1.5, rtol=1e-12)
    assert lam1 > 0


def test_normalize_upsilon_spread_warning(base, caplog):
    import logging
    batch, w, ze, h_fs, c = base
    with caplog.at_level(logging.WARNING, logger="g2link.link"):
        lk.normalize_upsilon(c, np.real(np.linalg.det(h_fs)))
    assert any("far from Ricci-flat" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# flat-model oracle for the assembled structure

def flat_model_parts():
    eta = AltForm.basis(7, (6,))
    omega = (AltForm.basis(7, (0, 1)) + AltForm.basis(7, (2, 3))
             + AltForm.basis(7, (4, 5)))
    re, im = lk.upsilon_coeffs(np.array([1.0 + 0.0j]))
    return eta, omega, AltForm(7, 3, re[0]), AltForm(7, 3, im[0])


def test_flat_model_phi_is_standard():
    eta, omega, re_u, im_u = flat_model_parts()
    phi = wedge(eta, omega) + re_u
    g, vol = metric_from_3form(phi)
    assert np.allclose(g.entries, np.eye(7), atol=1e-13)
    assert np.isclose(vol, 1.0)
    psi = 0.5 * wedge(omega, omega) + wedge(eta, im_u)
    assert np.allclose(hodge_star(phi, g).coeffs, psi.coeffs, atol=1e-13)
    assert np.isclose(wedge(phi, psi).coeffs[0], 7.0)


def test_build_g2_sample_flat_model():
    class FakeLink:
        x = np.zeros(10)
        patch = (0, 1)
    eta, omega, re_u, im_u = flat_model_parts()
    sample = lk.build_g2_sample(FakeLink(), omega, re_u, im_u, eta)
    assert np.allclose(sample.metric(), np.eye(7), atol=1e-12)
    assert np.isclose(sample.vol_g2, 1.0)
    assert np.isclose(sample.vol_cy, 1.0)
    assert len(sample.input19) == 19
    assert sample.input19[17] == 0 and sample.input19[18] == 1


# ---------------------------------------------------------------------------
# batched assembly on real data

@pytest.fixture(scope="module")
def assembled(base):
    batch, w, ze, h_fs, c = base
    h_used = 2.0 * h_fs
    det_h = np.real(np.linalg.det(h_used))
    lam_pt = lk.pointwise_upsilon_scale(c, det_h)
    theta = np.random.default_rng(3).uniform(0, 2 * np.pi, len(batch))
    g2_pt = lk.assemble_g2_batch(w, ze, batch.a, batch.e, theta, h_used, c,
                                 lam_pt)
    lam = lk.normalize_upsilon(c, det_h)
    g2_gl = lk.assemble_g2_batch(w, ze, batch.a, batch.e, theta, h_used, c,
                                 lam)
    return g2_pt, g2_gl, theta


def test_assembled_metric_positive_definite(assembled):
    for g2 in assembled[:2]:
        assert np.linalg.eigvalsh(g2.metrics()).min() > 0
        assert np.all(g2.vol_g2 > 0)


def test_assembled_wedge_ratio_pointwise(assembled):
    g2_pt = assembled[0]
    ratio = wedge_batch(7, 3, 4, g2_pt.phi, g2_pt.psi)[:, 0] / g2_pt.vol_g2
    assert np.abs(ratio - 7.0).max() < 1e-10


def test_assembled_hodge_crosscheck_pointwise(assembled):
    g2_pt = assembled[0]
    star = hodge_star_batch(g2_pt.phi, g2_pt.metrics(), 3)
    rel = np.linalg.norm(star - g2_pt.psi, axis=1) \
        / np.linalg.norm(g2_pt.psi, axis=1)
    assert rel.max() < 1e-10


def test_assembled_s1_invariance(base):
    batch, w, ze, h_fs, c = base
    h_used = 2.0 * h_fs
    lam = 1.7
    t1 = np.full(len(batch), 0.4)
    t2 = np.full(len(batch), 5.1)
    g2a = lk.assemble_g2_batch(w, ze, batch.a, batch.e, t1, h_used, c, lam)
    g2b = lk.assemble_g2_batch(w, ze, batch.a, batch.e, t2, h_used, c, lam)
    assert np.abs(g2a.phi - g2b.phi).max() < 1e-9
    assert np.abs(g2a.g_lower - g2b.g_lower).max() < 1e-9
    # ambient inputs rotate, patches agree
    assert np.abs(g2a.input19[:, :10] - g2b.input19[:, :10]).max() > 0.01
    assert np.array_equal(g2a.input19[:, 17:], g2b.input19[:, 17:])


def test_assembled_eta_column(assembled):
    g2_pt = assembled[0]
    assert np.allclose(g2_pt.eta[:, 6], 1.0, atol=1e-9)
    assert np.allclose(g2_pt.input19[:, 10:17], g2_pt.eta, atol=1e-12)


def test_batch_record_roundtrip(assembled):
    g2 = assembled[1]
    M = g2.to_matrix()
    back = lk.G2Batch.from_matrix(M)
    assert np.array_equal(back.phi, g2.phi)
    assert np.array_equal(back.patch, g2.patch)


def test_fibre_angles_structure():
    rng = np.random.default_rng(5)
    ang = lk.fibre_angles(5, 3, rng)
    assert ang.shape == (15,)
    block = ang[:5]
    gaps = np.diff(np.sort(block))
    assert np.allclose(gaps, 2 * np.pi / 5, atol=1e-9)
    assert np.allclose(ang[5:10], block)
