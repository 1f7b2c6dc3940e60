"""Numerical coclosed G2-structures on the quintic Calabi-Yau link.

Library layout:

- ``forms``      dense exterior algebra (wedge, interior product, Hodge star,
                 metric reconstruction from a G2 3-form)
- ``quintic``    Fermat quintic geometry: sampling, patches, Fubini-Study
                 pullbacks, residue volume form
- ``cy_metric``  neural multiplicative correction to the Fubini-Study metric
                 trained on a Monge-Ampere + volume objective
- ``link``       lift to the 7-dimensional link in S^9 and G2 sample assembly
- ``ned``        numerical exterior derivative of black-box form evaluators
- ``regressor``  dense regressors for the G2 3-form and its induced metric
- ``dataset``    binary dataset format and deterministic splits
- ``verify``     identity / torsion / correlation verification reports
- ``pipeline``   stage orchestration and the command line interface
"""
from . import forms
from .forms import (AltForm, MetricTensor, DegenerateFormError, wedge,
                    interior_product, hodge_star, metric_from_3form, norm,
                    standard_phi0, standard_psi0)

__version__ = "0.1.0"
