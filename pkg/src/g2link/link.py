"""Lift of quintic points to the 7-dimensional link in S^9 and assembly of the
coclosed G2 structure (phi, psi, g) in chart coordinates.

Chart convention: each base point carries affine coordinates w = (w1, w2, w3)
(the retained homogeneous ratios, ascending index order) and the chart of the
link orders its seven real coordinates as

    (u1, u2, u3, u4, u5, u6, theta) = (Re w1, Im w1, Re w2, Im w2, Re w3, Im w3, theta),

with theta the fibre angle of z -> e^{i theta} z.  The chart map into the
ambient R^10 is Phi(w, theta) = e^{i theta} zhat(w) / |zhat(w)| with zhat the
affine representative (zhat_a = 1, eliminated coordinate solved from the
quintic).  All 35/28-component vectors use lexicographic multi-index order of
these coordinates.
"""
import logging
from math import comb

import numpy as np

from . import quintic
from .forms import (AltForm, MetricTensor, metric_from_3form,
                    metric_from_3form_batch, rank_of, wedge, wedge_batch)
from .ned import FormEvaluator, ned
from .quintic import (affine_chart, chart_jacobian_ambient, fs_pullback,
                      interleave_real, residue_coeff, solve_ze)

logger = logging.getLogger("g2link.link")

THETA_AXIS = 6
TOP6_RANK = rank_of((0, 1, 2, 3, 4, 5), 7)  # du^{1...6} inside the 7-dim algebra

# coefficient patterns of Re(dw1^dw2^dw3) and Im(dw1^dw2^dw3) in interleaved reals
_RE_PATTERN = (((0, 2, 4), 1.0), ((0, 3, 5), -1.0), ((1, 2, 5), -1.0), ((1, 3, 4), -1.0))
_IM_PATTERN = (((0, 2, 5), 1.0), ((0, 3, 4), 1.0), ((1, 2, 4), 1.0), ((1, 3, 5), -1.0))

_LOWER_TRI = np.tril_indices(7)


# ---------------------------------------------------------------------------
# Chart map and contact form

def link_chart(w, ze, theta):
    """Ambient position, chart Jacobian and contact pullback for chart points.

    Args:
        w: (N, 3) complex retained affine coordinates.
        ze: (N,) complex eliminated affine coordinate (on the quintic).
        theta: (N,) fibre angles.

    Returns:
        x: (N, 10) interleaved ambient coordinates on S^9.
        J: (N, 7, 10) real chart Jacobian, rows in chart coordinate order.
        eta: (N, 7) chart coefficients of the contact form (unit c_eta).
    """
    w = np.atleast_2d(w)
    ze = np.atleast_1d(ze)
    theta = np.atleast_1d(theta)
    N = len(w)
    zhat = np.concatenate([np.ones((N, 1)), w, ze[:, None]], axis=1)  # local rows
    P = quintic.ambient_jacobian(w, ze)  # (N, 5, 3), local row order
    r = np.linalg.norm(zhat, axis=1)
    phase = np.exp(1j * theta)
    y = phase[:, None] * zhat / r[:, None]
    # rho_j = d r / d w_j
    rho = np.einsum('ni,nij->nj', np.conj(zhat), P) / (2.0 * r[:, None])
    du = phase[:, None, None] * (P / r[:, None, None]
                                 - zhat[:, :, None] * (2.0 * rho.real[:, None, :])
                                 / (r ** 2)[:, None, None])
    dv = phase[:, None, None] * (1j * P / r[:, None, None]
                                 + zhat[:, :, None] * (2.0 * rho.imag[:, None, :])
                                 / (r ** 2)[:, None, None])
    dtheta = 1j * y
    J = np.empty((N, 7, 10))
    for j in range(3):
        J[:, 2 * j, 0::2] = du[:, :, j].real
        J[:, 2 * j, 1::2] = du[:, :, j].imag
        J[:, 2 * j + 1, 0::2] = dv[:, :, j].real
        J[:, 2 * j + 1, 1::2] = dv[:, :, j].imag
    J[:, THETA_AXIS, 0::2] = dtheta.real
    J[:, THETA_AXIS, 1::2] = dtheta.imag

    x = interleave_real(y)
    # ambient contact covector sum(x_i dy_i - y_i dx_i) in interleaved reals
    v = np.empty_like(x)
    v[:, 0::2] = -x[:, 1::2]
    v[:, 1::2] = x[:, 0::2]
    eta = np.einsum('ncm,nm->nc', J, v)
    return x, J, eta


def scatter_chart_rows(x_local, a, e):
    """Reorder (N, 10) interleaved reals from local row order to ambient order."""
    N = len(x_local)
    a = np.atleast_1d(a)
    e = np.atleast_1d(e)
    out = np.empty_like(x_local)
    for n in range(N):
        rows = (a[n],) + quintic.retained_indices(a[n], e[n]) + (e[n],)
        for loc, amb in enumerate(rows):
            out[n, 2 * amb] = x_local[n, 2 * loc]
            out[n, 2 * amb + 1] = x_local[n, 2 * loc + 1]
    return out


class LinkPoint:
    """A point of the link: ambient position, fibre angle, chart Jacobian."""

    def __init__(self, x, theta, base, J, patch):
        self.x = np.asarray(x, dtype=np.float64)
        self.theta = float(theta)
        self.base = base
        self.J = np.asarray(J, dtype=np.float64)
        self.patch = (int(patch[0]), int(patch[1]))

    def __repr__(self):
        return f"LinkPoint(theta={self.theta:.4f}, patch={self.patch})"


def lift_to_link(p, theta):
    """Lift a QuinticPoint to the link at fibre angle theta.

    The representative is the affine one (z_a scaled to 1) normalized onto
    S^9, so theta = 0 corresponds to the canonical (z_a real positive) phase.
    """
    a = np.array([p.patch[0]])
    e = np.array([p.patch[1]])
    w, ze = affine_chart(p.z[None, :], a, e)
    x_loc, J_loc, _ = link_chart(w, ze, np.array([theta]))
    x = scatter_chart_rows(x_loc, a, e)[0]
    J = np.empty((7, 10))
    rows = (p.patch[0],) + quintic.retained_indices(*p.patch) + (p.patch[1],)
    for loc, amb in enumerate(rows):
        J[:, 2 * amb] = J_loc[0][:, 2 * loc]
        J[:, 2 * amb + 1] = J_loc[0][:, 2 * loc + 1]
    if np.linalg.matrix_rank(J) < 7:
        raise ValueError("chart Jacobian is rank-deficient; resample")
    return LinkPoint(x, theta, p, J, p.patch)


def contact_form(lp, c_eta=1.0):
    """Contact 1-form at a link point, pulled back to chart coordinates.

    The ambient form is c_eta * sum(x_i dy_i - y_i dx_i) restricted from S^9;
    its chart theta-component equals c_eta and it annihilates the base
    directions' theta-column.
    """
    x = lp.x
    v = np.empty(10)
    v[0::2] = -x[1::2]
    v[1::2] = x[0::2]
    coeffs = c_eta * lp.J @ v
    return AltForm(7, 1, coeffs)


# ---------------------------------------------------------------------------
# Base-form pullbacks

def kahler_coeffs(h):
    """Kahler 2-form of Hermitian matrices h (N, 3, 3) as (N, 21) coefficients.

    Convention omega = (i/2) h_{m nbar} dw^m ^ dwbar^n in interleaved reals:
    the identity matrix gives du1^du2 + du3^du4 + du5^du6, and
    omega^3 / 3! = det(h) du^{1...6}.  Theta components vanish.
    """
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[None]
    A, B = h.real, h.imag
    out = np.zeros((len(h), comb(7, 2)))
    for m in range(3):
        for n in range(3):
            if m == n:
                out[:, rank_of((2 * m, 2 * m + 1), 7)] = A[:, m, m]
                continue
            pairs = (((2 * m, 2 * n), -B[:, m, n]),
                     ((2 * m, 2 * n + 1), A[:, m, n]),
                     ((2 * m + 1, 2 * n), -A[:, n, m]),
                     ((2 * m + 1, 2 * n + 1), -B[:, m, n]))
            for (p, q), val in pairs:
                if p < q:
                    out[:, rank_of((p, q), 7)] = val
    return out


def base_metric_real(h):
    """Riemannian 6x6 metric of Hermitian h (N, 3, 3) in interleaved reals.

    g = Re(h_{m nbar} dw^m dwbar^n); det(g) = det(h)^2.
    """
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[None]
    A, B = h.real, h.imag
    g = np.zeros((len(h), 6, 6))
    g[:, 0::2, 0::2] = A
    g[:, 1::2, 1::2] = A
    g[:, 0::2, 1::2] = B
    g[:, 1::2, 0::2] = -B
    return g


def pullback_base_2form(g_herm, lp=None):
    """Kahler form of a Hermitian base metric as a 7-dimensional 2-form."""
    h = g_herm.matrix if hasattr(g_herm, "matrix") else np.asarray(g_herm)
    return AltForm(7, 2, kahler_coeffs(h)[0])


def upsilon_coeffs(lam_c):
    """Real 3-form pair of the scaled volume form lam*c*dw1^dw2^dw3.

    Returns (re, im) arrays of shape (N, 35).  The imaginary output carries
    the orientation convention that makes psi = 1/2 w^w + eta^im the Hodge
    dual of phi = eta^w + re on compatible data: im = -Im(lam c dw123).
    """
    lam_c = np.atleast_1d(np.asarray(lam_c, dtype=np.complex128))
    re = np.zeros((len(lam_c), comb(7, 3)))
    im = np.zeros_like(re)
    for idx, s in _RE_PATTERN:
        r = rank_of(idx, 7)
        re[:, r] += s * lam_c.real
        im[:, r] += -s * lam_c.imag
    for idx, s in _IM_PATTERN:
        r = rank_of(idx, 7)
        re[:, r] += -s * lam_c.imag
        im[:, r] += -s * lam_c.real
    return re, im


def pullback_upsilon(c, lp=None, lam=1.0):
    """Holomorphic volume form pullback as a pair of real 3-forms."""
    cval = c.c if hasattr(c, "c") else complex(c)
    re, im = upsilon_coeffs(np.array([lam * cval]))
    return AltForm(7, 3, re[0]), AltForm(7, 3, im[0])


def normalize_upsilon(c, det_h, spread_warn=0.5):
    """Global scale lambda matching the volume form to the base Kahler data.

    Chooses |lambda| so that the median over samples of
    |lambda c|^2 / det(h) is 1, the compatibility ratio of the flat model
    (where phi = eta^w + Re(dz123) has unit induced metric).  The phase is
    fixed real positive.  Warns when the ratio spread exceeds spread_warn:
    the base metric is then far from Ricci-flat and a single scale cannot
    make the compatibility pointwise.
    """
    c = np.asarray(c)
    det_h = np.asarray(det_h)
    if len(c) < 1:
        raise ValueError("normalize_upsilon needs samples")
    ratio = np.abs(c) ** 2 / det_h
    med = float(np.median(ratio))
    if med <= 0:
        raise ValueError("non-positive compatibility ratio")
    lo, hi = np.percentile(ratio, [25, 75])
    spread = (hi - lo) / med
    if spread > spread_warn:
        logger.warning(
            "Upsilon compatibility ratio spread %.1f%% (IQR/median): base "
            "metric is far from Ricci-flat; a global scale is a compromise",
            100 * spread)
    return float(1.0 / np.sqrt(med))


def pointwise_upsilon_scale(c, det_h):
    """Per-point scale making the volume form exactly compatible pointwise."""
    return np.sqrt(np.asarray(det_h)) / np.abs(np.asarray(c))


# ---------------------------------------------------------------------------
# G2 sample assembly

class G2Sample:
    """One dataset record of the G2 structure at a link point."""

    def __init__(self, phi, psi, g_lower, vol_g2, vol_cy, eta, input19, patch):
        self.phi = np.asarray(phi)
        self.psi = np.asarray(psi)
        self.g_lower = np.asarray(g_lower)
        self.vol_g2 = float(vol_g2)
        self.vol_cy = float(vol_cy)
        self.eta = np.asarray(eta)
        self.input19 = np.asarray(input19)
        self.patch = (int(patch[0]), int(patch[1]))

    def metric(self):
        g = np.zeros((7, 7))
        g[_LOWER_TRI] = self.g_lower
        return g + np.tril(g, -1).T


def build_g2_sample(lp, omega, re_u, im_u, eta):
    """Assemble one G2 sample from its chart ingredients.

    phi = eta ^ omega + re_u, psi = 1/2 omega ^ omega + eta ^ im_u, the metric
    and 7-volume from the 3-form, and the 6-volume from omega^3 / 3!.
    """
    phi = wedge(eta, omega) + re_u
    psi = 0.5 * wedge(omega, omega) + wedge(eta, im_u)
    g, vol_g2 = metric_from_3form(phi)
    vol_cy = wedge(wedge(omega, omega), omega).coeffs[TOP6_RANK] / 6.0
    g_lower = g.entries[_LOWER_TRI]
    input19 = np.concatenate([lp.x, eta.coeffs, np.asarray(lp.patch, dtype=np.float64)])
    return G2Sample(phi.coeffs, psi.coeffs, g_lower, vol_g2, vol_cy,
                    eta.coeffs, input19, lp.patch)


class G2Batch:
    """Vectorized G2 samples: one row per (base point, fibre angle) pair."""

    FIELDS = (("phi", 35), ("psi", 35), ("g_lower", 28), ("vol_g2", 1),
              ("vol_cy", 1), ("eta", 7), ("input19", 19), ("patch", 2))
    WIDTH = sum(w for _, w in FIELDS)

    def __init__(self, phi, psi, g_lower, vol_g2, vol_cy, eta, input19, patch):
        self.phi = phi
        self.psi = psi
        self.g_lower = g_lower
        self.vol_g2 = vol_g2
        self.vol_cy = vol_cy
        self.eta = eta
        self.input19 = input19
        self.patch = patch

    def __len__(self):
        return len(self.phi)

    def __getitem__(self, i):
        return G2Sample(self.phi[i], self.psi[i], self.g_lower[i],
                        self.vol_g2[i], self.vol_cy[i], self.eta[i],
                        self.input19[i], self.patch[i])

    def metrics(self):
        g = np.zeros((len(self), 7, 7))
        g[:, _LOWER_TRI[0], _LOWER_TRI[1]] = self.g_lower
        return g + np.tril(g, -1).transpose(0, 2, 1)

    def to_matrix(self):
        cols = [self.phi, self.psi, self.g_lower, self.vol_g2[:, None],
                self.vol_cy[:, None], self.eta, self.input19,
                self.patch.astype(np.float64)]
        return np.concatenate(cols, axis=1)

    @classmethod
    def from_matrix(cls, M):
        if M.shape[1] != cls.WIDTH:
            raise ValueError(f"record width {M.shape[1]} != {cls.WIDTH}")
        parts = []
        at = 0
        for _, wdt in cls.FIELDS:
            parts.append(M[:, at:at + wdt])
            at += wdt
        return cls(parts[0], parts[1], parts[2], parts[3][:, 0], parts[4][:, 0],
                   parts[5], parts[6], parts[7].astype(np.int64))

    def subset(self, idx):
        return G2Batch(self.phi[idx], self.psi[idx], self.g_lower[idx],
                       self.vol_g2[idx], self.vol_cy[idx], self.eta[idx],
                       self.input19[idx], self.patch[idx])


def assemble_g2_batch(w, ze, a, e, theta, h_used, c, lam, c_eta=1.0):
    """Vectorized G2 sample assembly over chart points.

    Args:
        w, ze, a, e: base chart data (one row per output record).
        theta: fibre angles, one per record.
        h_used: (N, 3, 3) Hermitian base metric, already Kahler-scale adjusted.
        c: (N,) residue coefficients.
        lam: scalar (global normalization) or (N,) per-point scale.
        c_eta: contact form scale.
    """
    x_loc, _, eta7 = link_chart(w, ze, theta)
    x = scatter_chart_rows(x_loc, a, e)
    eta7 = c_eta * eta7
    omega = kahler_coeffs(h_used)
    lam_c = np.asarray(lam) * np.asarray(c)
    re_u, im_u = upsilon_coeffs(lam_c)
    phi = wedge_batch(7, 1, 2, eta7, omega) + re_u
    psi = 0.5 * wedge_batch(7, 2, 2, omega, omega) + wedge_batch(7, 1, 3, eta7, im_u)
    g, vol_g2 = metric_from_3form_batch(phi)
    vol_cy = np.real(np.linalg.det(h_used))
    g_lower = g[:, _LOWER_TRI[0], _LOWER_TRI[1]]
    patch = np.stack([np.atleast_1d(a), np.atleast_1d(e)], axis=1)
    input19 = np.concatenate([x, eta7, patch.astype(np.float64)], axis=1)
    return G2Batch(phi, psi, g_lower, vol_g2, vol_cy, eta7, input19, patch)


# ---------------------------------------------------------------------------
# Exact chart evaluators (for NED and verification)

def _uncomplex(u6):
    return u6[0::2] + 1j * u6[1::2]


class ChartEvaluator:
    """Smooth form fields of one chart, evaluated at arbitrary chart points.

    All evaluations stay on the branch of the eliminated coordinate closest
    to ze_near, so stencils never cross chart caustics.  The Hermitian base
    metric defaults to the Fubini-Study pullback; a callable
    hermitian_fn(w, ze, a, e) -> (1, 3, 3) substitutes a learned metric.
    """

    def __init__(self, a, e, ze_near, lam=1.0, kahler_scale=1.0, c_eta=1.0,
                 hermitian_fn=None):
        self.a = int(a)
        self.e = int(e)
        self.ze_near = complex(ze_near)
        self.lam = float(lam)
        self.kahler_scale = float(kahler_scale)
        self.c_eta = float(c_eta)
        self.hermitian_fn = hermitian_fn
        self.chart = (self.a, self.e)

    def _pieces(self, u7):
        u7 = np.asarray(u7, dtype=np.float64)
        w = _uncomplex(u7[:6])[None, :]
        ze = solve_ze(w, np.array([self.ze_near]))
        theta = np.array([u7[THETA_AXIS]])
        a = np.array([self.a])
        e = np.array([self.e])
        x_loc, J, eta7 = link_chart(w, ze, theta)
        if self.hermitian_fn is None:
            h = fs_pullback(w, ze, a, e)
        else:
            h = self.hermitian_fn(w, ze, a, e)
        h = self.kahler_scale * h
        c = residue_coeff(ze, a, e)
        return {"w": w, "ze": ze, "a": a, "e": e, "x_loc": x_loc,
                "eta": self.c_eta * eta7, "h": h, "c": c}

    def eta_at(self, u7):
        return self._pieces(u7)["eta"][0]

    def omega_at(self, u7):
        return kahler_coeffs(self._pieces(u7)["h"])[0]

    def phi_at(self, u7):
        p = self._pieces(u7)
        omega = kahler_coeffs(p["h"])
        re_u, _ = upsilon_coeffs(self.lam * p["c"])
        return (wedge_batch(7, 1, 2, p["eta"], omega) + re_u)[0]

    def psi_at(self, u7):
        p = self._pieces(u7)
        omega = kahler_coeffs(p["h"])
        _, im_u = upsilon_coeffs(self.lam * p["c"])
        return (0.5 * wedge_batch(7, 2, 2, omega, omega)
                + wedge_batch(7, 1, 3, p["eta"], im_u))[0]

    def input19_at(self, u7):
        p = self._pieces(u7)
        x = scatter_chart_rows(p["x_loc"], p["a"], p["e"])[0]
        return np.concatenate([x, p["eta"][0],
                               np.array([self.a, self.e], dtype=np.float64)])

    def eta_evaluator(self):
        return FormEvaluator(self.eta_at, 1, chart=self.chart)

    def omega_evaluator(self):
        return FormEvaluator(self.omega_at, 2, chart=self.chart)

    def phi_evaluator(self):
        return FormEvaluator(self.phi_at, 3, chart=self.chart)

    def psi_evaluator(self):
        return FormEvaluator(self.psi_at, 4, chart=self.chart)


def chart_center(w, ze, theta):
    """Chart coordinates of a base point at fibre angle theta."""
    u = np.empty(7)
    u[0:6:2] = np.atleast_2d(w)[0].real
    u[1:6:2] = np.atleast_2d(w)[0].imag
    u[THETA_AXIS] = np.atleast_1d(theta)[0]
    return u


def evaluator_for_record(a, e, w, ze, lam, kahler_scale, c_eta=1.0,
                         hermitian_fn=None):
    """ChartEvaluator anchored at a dataset record's base point."""
    return ChartEvaluator(a, e, np.atleast_1d(ze)[0], lam=lam,
                          kahler_scale=kahler_scale, c_eta=c_eta,
                          hermitian_fn=hermitian_fn)


def calibrate_kahler_scale(w, ze, a, e, eps=1e-4, max_points=200):
    """Least-squares scale s with d(eta) = s * omega(h_FS) over sample points.

    The round contact form and the Fubini-Study convention used here satisfy
    this with a single global constant; the numerical estimate comes from the
    NED of eta against the pullback Kahler form coefficients.
    """
    N = min(len(np.atleast_1d(ze)), max_points)
    num = 0.0
    den = 0.0
    for i in range(N):
        ev = ChartEvaluator(np.atleast_1d(a)[i], np.atleast_1d(e)[i],
                            np.atleast_1d(ze)[i])
        u0 = chart_center(np.atleast_2d(w)[i:i + 1], np.atleast_1d(ze)[i:i + 1],
                          0.0)
        d_eta = ned(ev.eta_evaluator(), u0, eps).coeffs
        omega = ev.omega_at(u0)
        num += float(d_eta @ omega)
        den += float(omega @ omega)
    if den <= 0:
        raise ValueError("degenerate Kahler data in calibration")
    return num / den


def fibre_angles(n_thetas, n_points, rng):
    """Uniformly spaced fibre angles with one random global offset."""
    offset = rng.uniform(0.0, 2.0 * np.pi)
    base = offset + 2.0 * np.pi * np.arange(n_thetas) / n_thetas
    return np.mod(np.tile(base, n_points), 2.0 * np.pi)
