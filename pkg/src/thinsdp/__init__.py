"""Storage-optimal SDP solving: penalized-dual subgradient descent plus
low-rank primal recovery from the slack matrix's small eigenspace."""

from .audit import AllocationAudit
from .diagnostics import (ConditioningReport, QualityReport, conditioning,
                          distance_bound_minfeas, minobj_parameters,
                          opnorm_bound_from_feasible, quadratic_growth_check,
                          quality, regularity_probe, sigma_min_AV)
from .dual import (AdaptiveNormSchedule, DualSolveResult, PenaltyConfig,
                   PolyakSchedule, SqrtSchedule, StopRule, eval_penalized,
                   infeasibility_bound, refine_dual, repair_feasibility,
                   search_alpha_doubling, solve_dual, subgradient)
from .oracle import (DenseSolution, enumerate_solution_rank, planted_instance,
                     solve_dense)
from .problems import (ConstraintMap, CostOracle, DiagonalMap,
                       EntryObservationMap, FormatError, GenericSparseMap,
                       SdpProblem, SlackOperator, adjoint_consistency_check,
                       build_matrix_completion, build_maxcut, random_maxcut,
                       synthetic_matrix_completion)
from .recovery import (CompressedOperators, CompressedSolution,
                       RecoveryConfig, RecoveryResult, compress, default_rank,
                       recover, solve_minfeas, solve_minobj)
from .spectral import (Eigenbasis, EigensolverConfig, EigPair, MatrixOperator,
                       constraint_operator_norm, min_eigpair,
                       operator_norm_Amap, project_ball, project_psd,
                       smallest_subspace)

__version__ = "0.1.0"
