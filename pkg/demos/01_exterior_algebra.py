"""Tour of the dense exterior algebra: the model G2 3-form, its Hodge dual,
and the metric reconstructed from the 3-form alone.

Run:  python3 demos/01_exterior_algebra.py
"""
import numpy as np

from g2link.forms import (AltForm, MetricTensor, hodge_star, interior_product,
                          metric_from_3form, norm, standard_phi0,
                          standard_psi0, wedge)

phi0 = standard_phi0()
psi0 = standard_psi0()
print("model 3-form   phi0 =", phi0)
print("model 4-form   psi0 =", psi0)

# The 3-form already knows its metric: the bilinear contraction
# (e_i -| phi)^(e_j -| phi)^phi recovers the flat metric and unit volume.
g, vol = metric_from_3form(phi0)
print("\nmetric_from_3form(phi0) == identity:",
      np.allclose(g.entries, np.eye(7)), " volume density:", vol)

# Hodge duality and the fundamental wedge identity phi ^ *phi = 7 vol.
print("*phi0 == psi0:", np.allclose(hodge_star(phi0).coeffs, psi0.coeffs))
print("phi0 ^ psi0 =", wedge(phi0, psi0).coeffs[0], "(the G2 constant 7)")
print("|phi0| =", norm(phi0), "= sqrt(7)")

# Interior products peel off one index at a time.
e1 = np.zeros(7)
e1[0] = 1.0
print("\ne_1 -| phi0 =", interior_product(e1, phi0))

# The same identities hold across the GL(7) orbit of phi0: pull back by a
# random invertible map and everything transforms covariantly.
rng = np.random.default_rng(0)
A = np.eye(7) + 0.2 * rng.standard_normal((7, 7))
from g2link.forms import multi_indices, rank_of
phi = AltForm(7, 3)
for I in multi_indices(7, 3):
    val = 0.0
    for J in multi_indices(7, 3):
        val += phi0[J] * np.linalg.det(A[np.ix_(J, I)])
    phi.coeffs[rank_of(I, 7)] = val
g_phi, vol_phi = metric_from_3form(phi)
psi = hodge_star(phi, MetricTensor(g_phi.entries))
print("\nrandom GL(7) pullback: metric == A^T A:",
      np.allclose(g_phi.entries, A.T @ A, atol=1e-9))
print("wedge ratio phi^(*phi)/vol:",
      wedge(phi, psi).coeffs[0] / abs(vol_phi))
