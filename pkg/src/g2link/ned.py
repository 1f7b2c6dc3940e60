"""Numerical exterior derivative of black-box differential form evaluators.

The estimator samples a degree-k form at the 14 axis neighbours p +/- eps e_i
of a chart point and assembles the antisymmetrized central difference

    (d a)_{i0...ik} = sum_j (-1)^j [a_{i0...^ij...ik}(p + eps e_ij)
                                    - a_{...}(p - eps e_ij)] / (2 eps),

which is exact on forms with affine coefficients and second-order accurate in
general.  Evaluations are cached across multi-indices, so each call costs
exactly 2 n evaluations of the form.
"""
import csv
import logging
from math import comb

import numpy as np

from .forms import AltForm, multi_indices, rank_of

logger = logging.getLogger("g2link.ned")


class NedEvaluationError(RuntimeError):
    """Evaluator failure at a stencil point; carries the offending location."""

    def __init__(self, point, axis, direction, cause):
        self.point = np.asarray(point)
        self.axis = axis
        self.direction = direction
        super().__init__(
            f"form evaluation failed at stencil point p {'+' if direction > 0 else '-'} "
            f"eps*e_{axis}: {cause}")


class FormEvaluator:
    """A degree-k form field on one chart, evaluated through a callback.

    The callback maps a length-dim coordinate array to the C(dim, degree)
    coefficient vector (or an AltForm).  The chart label is carried along so
    stencils never silently mix charts.
    """

    def __init__(self, func, degree, dim=7, chart=None):
        self.func = func
        self.degree = degree
        self.dim = dim
        self.chart = chart

    def __call__(self, point):
        out = self.func(np.asarray(point, dtype=np.float64))
        if isinstance(out, AltForm):
            out = out.coeffs
        out = np.asarray(out, dtype=np.float64)
        if out.shape != (comb(self.dim, self.degree),):
            raise ValueError(
                f"evaluator returned shape {out.shape}, expected "
                f"({comb(self.dim, self.degree)},)")
        return out


def ned(f, p, eps):
    """Numerical exterior derivative of evaluator `f` at chart point `p`.

    Returns an AltForm of degree k+1.  Raises NedEvaluationError when the
    evaluator fails at a stencil point.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n, k = f.dim, f.degree
    if k >= n:
        raise ValueError("cannot differentiate a top-degree form")
    p = np.asarray(p, dtype=np.float64)
    plus, minus = [], []
    for axis in range(n):
        step = np.zeros(n)
        step[axis] = eps
        for direction, store in ((+1, plus), (-1, minus)):
            try:
                store.append(f(p + direction * step))
            except Exception as exc:  # noqa: BLE001 - reported with location
                raise NedEvaluationError(p, axis, direction, exc) from exc
    plus = np.asarray(plus)    # (n, C(n,k))
    minus = np.asarray(minus)
    diff = (plus - minus) / (2.0 * eps)

    out = AltForm(n, k + 1)
    for I in multi_indices(n, k + 1):
        total = 0.0
        for pos, axis in enumerate(I):
            rest = I[:pos] + I[pos + 1:]
            total += (-1.0) ** pos * diff[axis, rank_of(rest, n)]
        out.coeffs[rank_of(I, n)] = total
    return out


class SweepResult:
    """Median NED norms over a point set for an increasing list of eps values."""

    def __init__(self, eps_values, medians, regimes, failures=0):
        self.eps_values = list(eps_values)
        self.medians = list(medians)
        self.regimes = list(regimes)
        self.failures = failures

    def rows(self):
        return list(zip(self.eps_values, self.medians, self.regimes))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "median_norm", "regime"])
            for eps, med, reg in self.rows():
                writer.writerow([f"{eps:.6e}", f"{med:.10e}", reg])

    def __repr__(self):
        return f"SweepResult({len(self.eps_values)} eps values, " \
               f"failures={self.failures})"


def label_regimes(eps_values, medians):
    """Heuristic regime labels for a median-vs-eps curve.

    collapse: median < 1e-10 (pure floating-point cancellation);
    spike:    local maximum exceeding both neighbours by 10x;
    plateau:  within the top decade of eps and relative variation of that
              decade's medians below 20%.
    """
    eps_values = np.asarray(eps_values)
    medians = np.asarray(medians)
    labels = ["-"] * len(eps_values)
    top_decade = eps_values >= eps_values.max() / 10.0
    top = medians[top_decade]
    plateau = (top.max() - top.min()) <= 0.2 * max(abs(top).max(), 1e-300)
    for i, med in enumerate(medians):
        if med < 1e-10:
            labels[i] = "collapse"
        elif 0 < i < len(medians) - 1 and med > 10 * medians[i - 1] \
                and med > 10 * medians[i + 1]:
            labels[i] = "spike"
        elif plateau and top_decade[i]:
            labels[i] = "plateau"
    return labels


def epsilon_sweep(f, points, eps_list):
    """Median pointwise NED norm for each eps in an increasing list.

    Failed evaluations are counted and skipped; the sweep continues.
    """
    eps_list = sorted(float(e) for e in eps_list)
    if not eps_list or len(points) == 0:
        raise ValueError("epsilon_sweep needs nonempty points and eps values")
    medians = []
    failures = 0
    for eps in eps_list:
        norms = []
        for p in points:
            try:
                norms.append(float(np.linalg.norm(ned(f, p, eps).coeffs)))
            except NedEvaluationError as exc:
                failures += 1
                logger.warning("NED failure at eps=%.3e: %s", eps, exc)
        medians.append(float(np.median(norms)) if norms else np.nan)
    regimes = label_regimes(eps_list, medians)
    return SweepResult(eps_list, medians, regimes, failures=failures)
