"""Hierarchical uncertainty quantification with sparse gPC surrogates.

Bottom level: adaptive anchored ANOVA turns a high-dimensional black-box
model into a sparse generalized polynomial-chaos surrogate. Middle: each
standardized surrogate output receives its own orthonormal polynomials and
Gauss rule, with moments computed through tensor-train cross approximation.
Top level: a system-level function of those outputs is fitted by
stochastic testing over the custom bases.
"""
from .anova import (AnchoredConfig, AnovaSurrogate, AnovaTerm, SensitivityReport,
                    adaptive_decompose, anchored_restriction, extract_term, init_level_sets,
                    sample_count, sensitivities)
from .dist_poly import (DistributionSpec, QuadratureRule, RecurrenceFamily, RecurrencePair,
                        eval_orthonormal, golub_welsch, recurrence_coefficients)
from .errors import *  # noqa: F401,F403
from .gpc_basis import (GpcSurrogate, MultiIndexSet, eval_basis, surrogate_eval, surrogate_stats,
                        total_degree_set)
from .hier_quadrature import (CrossSettings, CustomBasis, IntermediateVariable,
                              UnivariateEvalTable, build_eval_table, custom_basis, standardize,
                              tt_moment, zeta_tensor)
from .high_level import HierarchySpec, compose, run_hierarchy, sample_density
from .model_def import Expr, ModelSpec, builtin, evaluate, model_from_json, parse
from .stoch_testing import (TestingPlan, candidate_grid, fit_coefficients, fit_surrogate,
                            select_testing_points)
from .tensor_train import (FunctionalTensor, TensorTrain, maxvol, tt_cross, tt_eval,
                           tt_eval_many, tt_frobenius, tt_inner_rank1, tt_svd)

__version__ = "0.1.0"
