"""Dense exterior algebra for antisymmetric forms on low-dimensional real spaces.

Coefficient convention: a degree-k form stores one real coefficient per strictly
increasing multi-index, equal to the value of the form on the corresponding basis
tuple.  No 1/k! factors appear anywhere.  Multi-indices are enumerated
lexicographically, so coefficient vectors have length C(n, k).
"""
import itertools
from functools import lru_cache
from math import comb

import numpy as np


class DegenerateFormError(ValueError):
    """Raised when a 3-form is too degenerate to induce a metric."""


# ---------------------------------------------------------------------------
# Multi-index bookkeeping

@lru_cache(maxsize=None)
def multi_indices(n, k):
    """All strictly increasing k-tuples in [0, n), lexicographic order."""
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def _index_rank(n, k):
    return {idx: r for r, idx in enumerate(multi_indices(n, k))}


def rank_of(indices, n):
    """Position of an increasing multi-index in the lexicographic enumeration."""
    return _index_rank(n, len(indices))[tuple(indices)]


def sort_with_sign(indices):
    """Sort an index tuple, returning (sorted tuple, permutation sign).

    Sign is 0 when the tuple has a repeated index.
    """
    idx = list(indices)
    sign = 1
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
        if j > 0 and idx[j - 1] == idx[j]:
            return tuple(idx), 0
    return tuple(idx), sign


@lru_cache(maxsize=None)
def wedge_table(n, ka, kb):
    """Sparse structure constants of the wedge product on increasing indices.

    Returns (ia, ib, iout, sign) integer arrays such that
    (a ^ b)[iout] += sign * a[ia] * b[ib] over all entries.
    """
    ia, ib, iout, sg = [], [], [], []
    out_rank = _index_rank(n, ka + kb)
    for ra, I in enumerate(multi_indices(n, ka)):
        for rb, J in enumerate(multi_indices(n, kb)):
            merged, sign = sort_with_sign(I + J)
            if sign == 0:
                continue
            ia.append(ra)
            ib.append(rb)
            iout.append(out_rank[merged])
            sg.append(sign)
    return (np.asarray(ia), np.asarray(ib), np.asarray(iout),
            np.asarray(sg, dtype=np.float64))


@lru_cache(maxsize=None)
def interior_table(n, k):
    """Structure constants of the interior product v -| a for degree-k input.

    Returns (iv, iin, iout, sign) with (v -| a)[iout] += sign * v[iv] * a[iin].
    The sign is (-1)^position of the removed index.
    """
    iv, iin, iout, sg = [], [], [], []
    out_rank = _index_rank(n, k - 1)
    for rin, I in enumerate(multi_indices(n, k)):
        for pos, i in enumerate(I):
            rest = I[:pos] + I[pos + 1:]
            iv.append(i)
            iin.append(rin)
            iout.append(out_rank[rest])
            sg.append((-1.0) ** pos)
    return (np.asarray(iv), np.asarray(iin), np.asarray(iout),
            np.asarray(sg, dtype=np.float64))


@lru_cache(maxsize=None)
def complement_table(n, k):
    """For each increasing k-index J: (rank of complement, sign of (J, J^c))."""
    ranks, signs = [], []
    comp_rank = _index_rank(n, n - k)
    for I in multi_indices(n, k):
        Jc = tuple(i for i in range(n) if i not in I)
        _, sign = sort_with_sign(I + Jc)
        ranks.append(comp_rank[Jc])
        signs.append(sign)
    return np.asarray(ranks), np.asarray(signs, dtype=np.float64)


# ---------------------------------------------------------------------------
# Value types

class AltForm:
    """A degree-k antisymmetric form on R^n with dense coefficients."""

    def __init__(self, dim, degree, coeffs=None):
        if not (0 <= degree <= dim):
            if degree > dim:
                # forms of degree > n are identically zero; clip to a zero form
                degree = dim
                coeffs = np.zeros(1)
            else:
                raise ValueError(f"invalid degree {degree}")
        size = comb(dim, degree)
        if coeffs is None:
            coeffs = np.zeros(size)
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (size,):
            raise ValueError(
                f"degree-{degree} form on R^{dim} needs {size} coefficients, "
                f"got shape {coeffs.shape}")
        self.dim = dim
        self.degree = degree
        self.coeffs = coeffs

    @classmethod
    def basis(cls, dim, indices):
        """The basis form e^{i1...ik} for a (possibly unsorted) index tuple."""
        srt, sign = sort_with_sign(tuple(indices))
        f = cls(dim, len(indices))
        if sign != 0:
            f.coeffs[rank_of(srt, dim)] = sign
        return f

    @classmethod
    def scalar(cls, dim, value):
        return cls(dim, 0, np.array([float(value)]))

    def copy(self):
        return AltForm(self.dim, self.degree, self.coeffs.copy())

    def __add__(self, other):
        self._check_same(other)
        return AltForm(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same(other)
        return AltForm(self.dim, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return AltForm(self.dim, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return AltForm(self.dim, self.degree, -self.coeffs)

    def __getitem__(self, indices):
        srt, sign = sort_with_sign(tuple(indices))
        if sign == 0:
            return 0.0
        return sign * self.coeffs[rank_of(srt, self.dim)]

    def _check_same(self, other):
        if self.dim != other.dim or self.degree != other.degree:
            raise ValueError("form dimension/degree mismatch")

    def __repr__(self):
        terms = []
        for r, I in enumerate(multi_indices(self.dim, self.degree)):
            c = self.coeffs[r]
            if c != 0.0:
                terms.append(f"{c:+g}*e{''.join(str(i + 1) for i in I)}")
        return f"AltForm({self.dim},{self.degree}: {' '.join(terms) or '0'})"


class MetricTensor:
    """A symmetric bilinear form on R^n, stored as a full n x n matrix."""

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("metric must be a square matrix")
        if not np.allclose(entries, entries.T, atol=1e-12):
            raise ValueError("metric must be symmetric")
        self.entries = 0.5 * (entries + entries.T)
        self.dim = entries.shape[0]

    @classmethod
    def euclidean(cls, dim):
        return cls(np.eye(dim))

    def is_positive_definite(self):
        return bool(np.all(np.linalg.eigvalsh(self.entries) > 0.0))

    def __repr__(self):
        return f"MetricTensor(dim={self.dim})"


# ---------------------------------------------------------------------------
# Core operations

def wedge(a, b):
    """Exterior product of two forms on the same space.

    Bilinear, associative, graded-commutative.  Degrees exceeding the
    dimension give the zero form.
    """
    if a.dim != b.dim:
        raise ValueError("wedge of forms on different spaces")
    k = a.degree + b.degree
    if k > a.dim:
        return AltForm(a.dim, a.dim, np.zeros(1)) * 0.0
    out = np.zeros(comb(a.dim, k))
    ia, ib, iout, sg = wedge_table(a.dim, a.degree, b.degree)
    np.add.at(out, iout, sg * a.coeffs[ia] * b.coeffs[ib])
    return AltForm(a.dim, k, out)


def wedge_batch(n, ka, kb, A, B):
    """Batched wedge on coefficient arrays of shape (N, C(n,ka)), (N, C(n,kb))."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    ia, ib, iout, sg = wedge_table(n, ka, kb)
    out = np.zeros((A.shape[0], comb(n, ka + kb)))
    np.add.at(out, (slice(None), iout), sg * A[:, ia] * B[:, ib])
    return out


def interior_product(v, a):
    """Contraction of a form with a vector in its first slot."""
    if a.degree < 1:
        raise ValueError("interior product needs degree >= 1")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (a.dim,):
        raise ValueError("vector length must equal form dimension")
    iv, iin, iout, sg = interior_table(a.dim, a.degree)
    out = np.zeros(comb(a.dim, a.degree - 1))
    np.add.at(out, iout, sg * v[iv] * a.coeffs[iin])
    return AltForm(a.dim, a.degree - 1, out)


@lru_cache(maxsize=None)
def _compound_index_arrays(n, k):
    idx = np.asarray(multi_indices(n, k))  # (C, k)
    return idx


def compound_matrix(M, k):
    """k-th compound of a matrix: determinants of all k x k minors.

    Entry [I, J] = det(M[I, J]) over increasing multi-indices; this is the
    induced action of M on degree-k coefficient vectors in lexicographic order.
    """
    n = M.shape[0]
    idx = _compound_index_arrays(n, k)
    if k == 0:
        return np.ones((1, 1))
    minors = M[np.ix_(idx.ravel(), idx.ravel())].reshape(
        len(idx), k, len(idx), k).transpose(0, 2, 1, 3)
    return np.linalg.det(minors)


def gram_on_forms(g, k):
    """Gram matrix of the metric induced on degree-k forms: C_k(g^{-1})."""
    g_inv = np.linalg.inv(g.entries if isinstance(g, MetricTensor) else g)
    return compound_matrix(g_inv, k)


def inner(a, b, g=None):
    """Pointwise metric inner product of two same-degree forms."""
    a._check_same(b)
    if g is None:
        return float(a.coeffs @ b.coeffs)
    G = gram_on_forms(g, a.degree)
    return float(a.coeffs @ G @ b.coeffs)


def norm(a, g=None):
    """Pointwise tensor norm sqrt(<a, a>_g); Euclidean metric by default."""
    val = inner(a, a, g)
    return float(np.sqrt(max(val, 0.0)))


def hodge_star(a, g=None):
    """Hodge dual of a form with respect to a positive-definite metric.

    Defined by a ^ *b = <a, b>_g vol_g with vol_g = sqrt(det g) e^{1...n}.
    Euclidean metric by default.
    """
    n, k = a.dim, a.degree
    if g is None:
        g = MetricTensor.euclidean(n)
    det_g = np.linalg.det(g.entries)
    if det_g <= 0 or not np.isfinite(det_g):
        raise ValueError("hodge_star needs a positive-definite metric")
    sharp = gram_on_forms(g, k) @ a.coeffs  # raise all indices
    comp, sign = complement_table(n, k)
    out = np.zeros(comb(n, n - k))
    out[comp] = sign * np.sqrt(det_g) * sharp
    return AltForm(n, n - k, out)


# ---------------------------------------------------------------------------
# G2 structure algebra on R^7

def standard_phi0():
    """The model G2 3-form e^123 + e^145 + e^167 + e^246 - e^257 - e^347 - e^356."""
    f = AltForm(7, 3)
    for indices, c in [((0, 1, 2), 1), ((0, 3, 4), 1), ((0, 5, 6), 1),
                       ((1, 3, 5), 1), ((1, 4, 6), -1), ((2, 3, 6), -1),
                       ((2, 4, 5), -1)]:
        f.coeffs[rank_of(indices, 7)] = c
    return f


def standard_psi0():
    """The model 4-form *phi0 for the Euclidean metric and orientation e^1...7."""
    f = AltForm(7, 4)
    for indices, c in [((3, 4, 5, 6), 1), ((1, 2, 5, 6), 1), ((1, 2, 3, 4), 1),
                       ((0, 2, 4, 6), 1), ((0, 2, 3, 5), -1), ((0, 1, 4, 5), -1),
                       ((0, 1, 3, 6), -1)]:
        f.coeffs[rank_of(indices, 7)] = c
    return f


@lru_cache(maxsize=None)
def _b_contraction_table():
    """Flat cubic contraction computing the 7x7 intermediate B from a 3-form.

    Yields arrays (i, j, ra, rb, rc, coef) with
    6 * B[i, j] = sum coef * phi[ra] * phi[rb] * phi[rc],
    the top coefficient of (e_i -| phi) ^ (e_j -| phi) ^ phi.
    """
    n = 7
    rank3 = _index_rank(n, 3)
    rows = []
    for i in range(n):
        for j in range(n):
            # (e_i -| phi) has 2-form coefficients +/- phi[{i} u P], i not in P
            for P in multi_indices(n, 2):
                if i in P:
                    continue
                IA, sa = sort_with_sign((i,) + P)
                for Q in multi_indices(n, 2):
                    if j in Q or set(P) & set(Q):
                        continue
                    IB, sb = sort_with_sign((j,) + Q)
                    rest = tuple(m for m in range(n) if m not in P and m not in Q)
                    merged, sm = sort_with_sign(P + Q + rest)
                    if sm == 0:
                        continue
                    # sign of moving removed index to the front of each 3-index
                    pa = ((i,) + P).index(i)
                    rows.append((i, j, rank3[IA], rank3[IB], rank3[rest],
                                 sa * sb * sm))
    arr = np.asarray([(r[0], r[1], r[2], r[3], r[4]) for r in rows], dtype=np.int64)
    coef = np.asarray([r[5] for r in rows], dtype=np.float64)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], coef


def _b_matrix_batch(phi_coeffs, chunk=4096):
    """Batched 7x7 B with 6 B_ij vol = (e_i -| phi) ^ (e_j -| phi) ^ phi.

    Processed in row chunks: the cubic contraction expands to a few thousand
    terms per point and would otherwise allocate gigabytes on large batches.
    """
    P = np.atleast_2d(phi_coeffs)
    i, j, ra, rb, rc, coef = _b_contraction_table()
    B = np.zeros((P.shape[0], 7, 7))
    for start in range(0, P.shape[0], chunk):
        sl = slice(start, min(start + chunk, P.shape[0]))
        terms = coef * P[sl, :][:, ra] * P[sl, :][:, rb] * P[sl, :][:, rc]
        np.add.at(B, (sl, i, j), terms)
    return B / 6.0


def metric_from_3form_batch(phi_coeffs, det_tol=1e-30):
    """Batched metric reconstruction from G2 3-form coefficient rows.

    Returns (g, vol) with g of shape (N, 7, 7) and vol of shape (N,);
    vol is sqrt(det g), carried with the sign of det B so an
    orientation-reversed input is detectable.
    """
    B = _b_matrix_batch(phi_coeffs)
    det_b = np.linalg.det(B)
    bad = np.abs(det_b) <= det_tol
    if np.any(bad):
        raise DegenerateFormError(
            f"{int(bad.sum())} of {len(det_b)} forms have |det B| <= {det_tol}")
    vol = np.sign(det_b) * np.abs(det_b) ** (1.0 / 9.0)
    g = B / vol[:, None, None]
    return g, vol


def metric_from_3form(phi, det_tol=1e-30):
    """Metric and volume density induced by a nondegenerate 3-form on R^7.

    The 3-form determines B_ij up to scale through the top-degree coefficient
    of (e_i -| phi) ^ (e_j -| phi) ^ phi; the metric is B / (det B)^{1/9} and
    the volume density sqrt(det g) = (det B)^{1/9}.  For a genuine G2 form the
    metric is positive-definite and the density positive.

    Raises DegenerateFormError when |det B| falls below det_tol.
    """
    if phi.dim != 7 or phi.degree != 3:
        raise ValueError("metric_from_3form expects a 3-form on R^7")
    g, vol = metric_from_3form_batch(phi.coeffs[None, :], det_tol)
    return MetricTensor(0.5 * (g[0] + g[0].T)), float(vol[0])


def hodge_star_batch(form_coeffs, g, degree):
    """Batched Hodge dual: form_coeffs (N, C(7,k)), g (N, 7, 7)."""
    F = np.atleast_2d(form_coeffs)
    n = g.shape[-1]
    det_g = np.linalg.det(g)
    g_inv = np.linalg.inv(g)
    idx = _compound_index_arrays(n, degree)
    C = len(idx)
    # minors of g_inv on all (I, J) pairs of k-indices, batched over points
    minors = g_inv[:, idx[:, None, :, None], idx[None, :, None, :]]
    gram = np.linalg.det(minors.reshape(F.shape[0], C, C, degree, degree))
    sharp = np.einsum('nij,nj->ni', gram, F)
    comp, sign = complement_table(n, degree)
    out = np.zeros((F.shape[0], comb(n, n - degree)))
    out[:, comp] = sign[None, :] * np.sqrt(det_g)[:, None] * sharp
    return out
