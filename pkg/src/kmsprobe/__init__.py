"""Korn-Maxwell-Sobolev inequality probing: part-map algebra, spectral
fields on periodic grids and a numerical inequality harness."""

from .operator_algebra import (PartMap, DiffOperator, catalogue, induce_operator,
                               symbol, pure_tensor, pure_tensor_span_dim,
                               is_elliptic, is_c_elliptic, is_cancelling,
                               factor_through, almost_complementary)
from .tensor_calculus import cross_product, cross_matrix, area_property_check
from .spectral_fields import Grid, PeriodicField
from .inequality_harness import (KMSConfig, KMSReport, kms_quotient,
                                 subcritical_quotient, predict, blowup_probe,
                                 estimate_constant, verify)

__version__ = "0.1.0"
