"""Geometry of the Fermat quintic hypersurface in CP^4.

Points are sampled by intersecting random complex lines with the hypersurface;
each point carries a patch assignment (dehomogenization index a, eliminated
index e), a Monte-Carlo weight, and exact local data: the Fubini-Study
pullback metric and the residue representative of the holomorphic volume form
in the three retained affine coordinates.
"""
import logging

import numpy as np

logger = logging.getLogger("g2link.quintic")

DEGREE = 5
NCOORDS = 5
GRAD_TOL = 1e-12


def eval_f(z):
    """Defining polynomial z_0^5 + ... + z_4^5, batched over leading axes."""
    z = np.asarray(z)
    return np.sum(z ** DEGREE, axis=-1)


def grad_f(z):
    """Gradient of the defining polynomial: components 5 z_i^4."""
    z = np.asarray(z)
    return DEGREE * z ** (DEGREE - 1)


# ---------------------------------------------------------------------------
# Patches and affine charts

def select_patch(z):
    """Patch assignment (a, e) for points on the quintic.

    a = argmax |z_i| (dehomogenization index), e = argmax over i != a of
    |df/dz_i| (index eliminated by the implicit function theorem).  The pair
    keeps both the affine coordinates and the implicit solve well conditioned.
    """
    z = np.atleast_2d(np.asarray(z))
    a = np.argmax(np.abs(z), axis=-1)
    dq = np.abs(grad_f(z))
    dq[np.arange(len(z)), a] = -1.0
    e = np.argmax(dq, axis=-1)
    best = dq[np.arange(len(z)), e]
    if np.any(best < GRAD_TOL):
        raise ValueError("all candidate gradients vanish; point is singular")
    if z.shape[0] == 1 and np.asarray(z).ndim == 1:
        return int(a[0]), int(e[0])
    return a, e


def retained_indices(a, e):
    """The three ambient indices kept as local coordinates, ascending."""
    return tuple(i for i in range(NCOORDS) if i != a and i != e)


def residue_sign(a, e):
    """Sign of the permutation sorting (retained..., e) ascending."""
    order = list(retained_indices(a, e)) + [e]
    sign = 1
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if order[i] > order[j]:
                sign = -sign
    return sign


def affine_chart(z, a, e):
    """Affine coordinates (w, ze) of the representative with z_a scaled to 1.

    w are the three retained coordinates z_r / z_a (ascending r), ze = z_e/z_a.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
    a = np.atleast_1d(a)
    e = np.atleast_1d(e)
    rows = np.arange(len(z))
    za = z[rows, a]
    zhat = z / za[:, None]
    cols = np.array([retained_indices(ai, ei) for ai, ei in zip(a, e)])
    w = zhat[rows[:, None], cols]
    ze = zhat[rows, e]
    return w, ze


def solve_ze(w, near):
    """Eliminated affine coordinate on the Fermat chart: ze^5 = -(1 + sum w^5).

    Of the five roots, returns the one closest to `near`, keeping evaluations
    within one chart branch.  Vectorized over leading axes.
    """
    w = np.atleast_2d(np.asarray(w, dtype=np.complex128))
    near = np.atleast_1d(np.asarray(near, dtype=np.complex128))
    rhs = -(1.0 + np.sum(w ** DEGREE, axis=-1))
    base = rhs ** (1.0 / DEGREE)
    phases = np.exp(2j * np.pi * np.arange(DEGREE) / DEGREE)
    cands = base[:, None] * phases[None, :]
    pick = np.argmin(np.abs(cands - near[:, None]), axis=-1)
    return cands[np.arange(len(w)), pick]


def ambient_jacobian(w, ze):
    """Derivative of the affine representative zhat with respect to w.

    Returns P of shape (N, 5, 3) in chart-local row order
    (a, r1, r2, r3, e): the a-row vanishes, retained rows are the identity and
    the e-row carries the implicit derivative d(ze)/dw_j = -(w_j/ze)^4.
    """
    w = np.atleast_2d(w)
    ze = np.atleast_1d(ze)
    N = len(w)
    P = np.zeros((N, NCOORDS, 3), dtype=np.complex128)
    P[:, 1, 0] = 1.0
    P[:, 2, 1] = 1.0
    P[:, 3, 2] = 1.0
    P[:, 4, :] = -(w / ze[:, None]) ** (DEGREE - 1)
    return P


def _scatter_rows(P_local, a, e):
    """Reorder chart-local rows (a, r1, r2, r3, e) to ambient index order."""
    N = len(P_local)
    out = np.zeros_like(P_local)
    rows = np.array([(ai,) + retained_indices(ai, ei) + (ei,)
                     for ai, ei in zip(np.atleast_1d(a), np.atleast_1d(e))])
    out[np.arange(N)[:, None], rows] = P_local
    return out


def chart_jacobian_ambient(w, ze, a, e):
    """d(zhat)/dw with rows in ambient coordinate order, shape (N, 5, 3)."""
    return _scatter_rows(ambient_jacobian(w, ze), a, e)


def fs_ambient_metric(zeta):
    """Fubini-Study metric of CP^4 in affine coordinates zeta (N, 4).

    Mixed Hessian of K = log(1 + |zeta|^2):
    g_{i jbar} = [delta_ij (1+|z|^2) - conj(zeta_i) zeta_j] / (1+|z|^2)^2.
    """
    zeta = np.atleast_2d(zeta)
    s = 1.0 + np.sum(np.abs(zeta) ** 2, axis=-1)
    outer = np.einsum('xi,xj->xij', np.conj(zeta), zeta)
    eye = np.eye(zeta.shape[-1])
    return (eye[None, :, :] * s[:, None, None] - outer) / (s ** 2)[:, None, None]


def fs_pullback(w, ze, a, e):
    """FS metric of CP^4 pulled back to the quintic chart, shape (N, 3, 3).

    h_{m nbar} = sum_{i,j} P_{im} g_{i jbar} conj(P_{jn}) with P the ambient
    Jacobian restricted to the four affine CP^4 coordinates.
    """
    w = np.atleast_2d(w)
    ze = np.atleast_1d(ze)
    P = ambient_jacobian(w, ze)  # local row order (a, r1, r2, r3, e)
    zeta = np.concatenate([w, ze[:, None]], axis=1)  # rows r1, r2, r3, e
    g_amb = fs_ambient_metric(zeta)
    P_zeta = P[:, 1:, :]  # drop the vanishing a-row
    return np.einsum('xim,xij,xjn->xmn', P_zeta, g_amb, np.conj(P_zeta))


def residue_coeff(ze, a, e):
    """Coefficient of the holomorphic volume form on dw1^dw2^dw3.

    The residue representative on the chart dehomogenized by z_a is
    sign * dw1^dw2^dw3 / (df_hat/d ze) with df_hat/d ze = 5 ze^4 and the sign
    orienting (retained, e) consistently across charts, so that chart
    transitions multiply the coefficient by exactly the holomorphic Jacobian.
    """
    ze = np.atleast_1d(ze)
    a = np.atleast_1d(a)
    e = np.atleast_1d(e)
    denom = DEGREE * ze ** (DEGREE - 1)
    if np.any(np.abs(denom) < GRAD_TOL):
        raise ValueError("residue denominator vanishes; resample the point")
    signs = np.array([residue_sign(ai, ei) for ai, ei in zip(a, e)])
    return signs / denom


def point_weights(w, ze, a, e):
    """Monte-Carlo weight dVol_CY / dA for line-intersection sampling.

    Intersections of random lines with the quintic are distributed by the
    Fubini-Study surface measure, so the weight is |c|^2 / det(h_FS) with c
    the residue coefficient; both factors transform with |J|^2 under chart
    changes, making the weight chart-independent.
    """
    h = fs_pullback(w, ze, a, e)
    c = residue_coeff(ze, a, e)
    det_h = np.real(np.linalg.det(h))
    return np.abs(c) ** 2 / det_h


# ---------------------------------------------------------------------------
# Sampling

def _sphere_points(rng, n, ncomplex=NCOORDS):
    pts = rng.standard_normal((n, 2 * ncomplex))
    pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    return pts.view(np.complex128)


def _line_roots(p, q):
    """Roots t of f(p + t q) = 0 via companion-matrix eigenvalues, (N, 5)."""
    from math import comb
    # f(p + t q) = sum_k t^k C(5, k) sum_i p_i^(5-k) q_i^k
    coeffs = np.stack([comb(DEGREE, k) * np.sum(p ** (DEGREE - k) * q ** k, axis=-1)
                       for k in range(DEGREE + 1)], axis=-1)  # low to high
    lead = coeffs[:, -1]
    good = np.abs(lead) > 1e-13
    comp = np.zeros((len(p), DEGREE, DEGREE), dtype=np.complex128)
    comp[:, 1:, :-1] = np.eye(DEGREE - 1)
    comp[good, :, -1] = -coeffs[good, :-1] / lead[good, None]
    roots = np.full((len(p), DEGREE), np.nan, dtype=np.complex128)
    roots[good] = np.linalg.eigvals(comp[good])
    return roots, good


def _newton_polish(p, q, t, steps=4):
    """Newton refinement of line-intersection parameters t, (N, 5) per line."""
    for _ in range(steps):
        z = p[:, None, :] + t[:, :, None] * q[:, None, :]
        val = eval_f(z)
        dval = np.sum(DEGREE * q[:, None, :] * z ** (DEGREE - 1), axis=-1)
        safe = np.abs(dval) > 1e-300
        t = np.where(safe, t - val / np.where(safe, dval, 1.0), t)
    return t


class QuinticPoint:
    """One sampled point: unit-norm representative, patch and MC weight."""

    def __init__(self, z, patch, weight):
        self.z = np.asarray(z, dtype=np.complex128)
        self.patch = (int(patch[0]), int(patch[1]))
        self.weight = float(weight)

    def __repr__(self):
        return f"QuinticPoint(patch={self.patch}, weight={self.weight:.4g})"


class HermitianMetric3:
    """A 3 x 3 Hermitian positive-definite matrix."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (3, 3):
            raise ValueError("expected a 3 x 3 matrix")
        if not np.allclose(matrix, matrix.conj().T, atol=1e-10):
            raise ValueError("matrix is not Hermitian")
        self.matrix = 0.5 * (matrix + matrix.conj().T)

    def det(self):
        return float(np.real(np.linalg.det(self.matrix)))

    def is_positive_definite(self):
        return bool(np.all(np.linalg.eigvalsh(self.matrix) > 0.0))


class HoloVolSample:
    """Residue coefficient of the holomorphic volume form on dw1^dw2^dw3."""

    def __init__(self, c):
        self.c = complex(c)
        if self.c == 0:
            raise ValueError("holomorphic volume form coefficient vanished")


class PointBatch:
    """Vectorized container for sampled quintic points."""

    def __init__(self, z, a, e, weight):
        self.z = z
        self.a = a
        self.e = e
        self.weight = weight

    def __len__(self):
        return len(self.z)

    def __getitem__(self, i):
        return QuinticPoint(self.z[i], (self.a[i], self.e[i]), self.weight[i])

    def chart_data(self):
        """Affine data (w, ze) of every point in its own chart."""
        return affine_chart(self.z, self.a, self.e)

    def subset(self, idx):
        return PointBatch(self.z[idx], self.a[idx], self.e[idx], self.weight[idx])


def sample_batch(count, seed, residual_tol=1e-10):
    """Sample `count` quintic points from random line intersections.

    Two independent points p, q on S^9 define the line p + t q; the five roots
    of the restricted quintic give five intersection points.  Representatives
    are scaled to the unit sphere.  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    collected = []
    total = 0
    skipped = 0
    while total < count:
        n_lines = max((count - total) // DEGREE + 1, 8)
        p = _sphere_points(rng, n_lines)
        q = _sphere_points(rng, n_lines)
        t, good = _line_roots(p, q)
        t = _newton_polish(p[good], q[good], t[good])
        z = (p[good, None, :] + t[:, :, None] * q[good, None, :]).reshape(-1, NCOORDS)
        z /= np.linalg.norm(z, axis=-1, keepdims=True)
        ok = np.abs(eval_f(z)) < residual_tol
        skipped += int((~ok).sum()) + int((~good).sum()) * DEGREE
        collected.append(z[ok])
        total += int(ok.sum())
    if skipped:
        logger.info("discarded %d non-converged intersection points", skipped)
    z = np.concatenate(collected, axis=0)[:count]
    a, e = select_patch(z)
    w, ze = affine_chart(z, a, e)
    weight = point_weights(w, ze, a, e)
    return PointBatch(z, a, e, weight)


def sample_points(count, seed):
    """List-of-points front end for sample_batch."""
    batch = sample_batch(count, seed)
    return [batch[i] for i in range(len(batch))]


def sample_weight(p):
    """Monte-Carlo weight of a single QuinticPoint."""
    a = np.array([p.patch[0]])
    e = np.array([p.patch[1]])
    w, ze = affine_chart(p.z[None, :], a, e)
    return float(point_weights(w, ze, a, e)[0])


def fs_metric(p):
    """FS pullback metric of a QuinticPoint in its chart coordinates."""
    a = np.array([p.patch[0]])
    e = np.array([p.patch[1]])
    w, ze = affine_chart(p.z[None, :], a, e)
    h = fs_pullback(w, ze, a, e)[0]
    return HermitianMetric3(h)


def holo_volume_form(p):
    """Residue coefficient of the holomorphic volume form at a QuinticPoint."""
    a = np.array([p.patch[0]])
    e = np.array([p.patch[1]])
    _, ze = affine_chart(p.z[None, :], a, e)
    return HoloVolSample(residue_coeff(ze, a, e)[0])


def canonical_representative(z, a):
    """Unit-norm representative with the a-th coordinate real positive.

    Fixes the fibre phase, so the result is a well-defined function of the
    projective point; used as network input for base-manifold regression.
    """
    z = np.atleast_2d(z)
    a = np.atleast_1d(a)
    za = z[np.arange(len(z)), a]
    phase = np.conj(za) / np.abs(za)
    out = z * phase[:, None]
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def interleave_real(zc):
    """Complex (N, k) -> real (N, 2k) as (Re c1, Im c1, Re c2, ...)."""
    zc = np.atleast_2d(zc)
    out = np.empty((zc.shape[0], 2 * zc.shape[1]))
    out[:, 0::2] = zc.real
    out[:, 1::2] = zc.imag
    return out


def mc_volume(weights, densities=None):
    """Weighted Monte-Carlo volume estimate: mean of w * density."""
    if densities is None:
        return float(np.mean(weights))
    return float(np.mean(weights * densities))


def kappa_ratio(det_g, c, weights):
    """Global Monge-Ampere normalization: <det g> / <|c|^2> in the CY measure."""
    num = float(np.sum(weights * det_g))
    den = float(np.sum(weights * np.abs(c) ** 2))
    if den <= 0 or num <= 0:
        raise ValueError("non-positive volume ratio; check inputs")
    return num / den
