"""Sampling the Fermat quintic by intersecting random lines with the
hypersurface, with the Monte-Carlo weights that convert line-intersection
averages into Calabi-Yau volume integrals.

Run:  python3 demos/02_sample_quintic.py
"""
import numpy as np

import g2link.quintic as q

batch = q.sample_batch(5000, seed=42)
print("sampled", len(batch), "points on z0^5 + ... + z4^5 = 0")
print("max |f(z)|                :", np.abs(q.eval_f(batch.z)).max())
print("patch (dehomogenization) histogram:", np.bincount(batch.a, minlength=5))

w, ze = batch.chart_data()
h = q.fs_pullback(w, ze, batch.a, batch.e)
c = q.residue_coeff(ze, batch.a, batch.e)
print("\nFubini-Study pullback: Hermitian 3x3, min eigenvalue:",
      np.linalg.eigvalsh(h).min())
print("residue coefficient |c| range: [%.3f, %.3f]"
      % (np.abs(c).min(), np.abs(c).max()))

# The weight |c|^2/det(h) converts the line-intersection density into the
# holomorphic volume measure; it is chart independent and seed stable.
print("\nweights: mean %.4f, sd %.4f" % (batch.weight.mean(),
                                         batch.weight.std()))
other = q.sample_batch(5000, seed=43)
print("MC volume seed stability: %.4f vs %.4f"
      % (batch.weight.mean(), other.weight.mean()))

# Monge-Ampere normalization of the Fubini-Study metric: the ratio
# det(h) / |c|^2 would be constant for a Ricci-flat metric; for FS it is not.
ratio = np.real(np.linalg.det(h)) / np.abs(c) ** 2
print("\nMA ratio det(h)/|c|^2: median %.4f, IQR/median %.2f "
      "(far from constant: FS is not Ricci-flat)"
      % (np.median(ratio),
         (np.percentile(ratio, 75) - np.percentile(ratio, 25))
         / np.median(ratio)))
