"""Parameter-free first-order solvers for convex function-constrained problems.

Two solver families over one oracle model:

* known optimal value — accelerated Polyak minorant iterations
  (:func:`apmm_solve`) and a restarted variant for problems with growth
  (:func:`rapmm_solve`);
* unknown optimal value — level-set root finding on the value function,
  driven by the accelerated proximal level engine
  (:func:`fixed_point_solve`, :func:`secant_solve`).

Both reduce every iteration to a small nearest-point QP or epigraph LP,
solved by the dense routines in :mod:`levelcraft.geomsub`.
"""

from .apl import AplResult, GapResult, record_contractions, run_apl, run_gap_reduction
from .apmm import (AccelSchedule, ApmmState, InvalidTargetValue, LocalizerPolicy, TheoryParams,
                   apmm_init, apmm_solve, apmm_step, averaging, constant_schedule, domain_only,
                   full_history, limited_memory, nesterov_schedule, polyak_step, rapmm_solve)
from .geomsub import (Box, LpProblem, LpSolution, QpProblem, QpSolution, SubproblemFailure,
                      brute_force_epigraph_lp, brute_force_nearest_point, solve_epigraph_lp,
                      solve_nearest_point)
from .levelset import (BoundEval, InitResult, LevelConfig, LevelIterate, fixed_point_solve,
                       initialize, iterate_levels, probe_value_function, secant_solve)
from .oracle import (AffineMinorant, CompositeEval, ConstrainedProblem, ConvexOracle,
                     OracleFailure, composite_minorant, composite_values, eval_composite,
                     minorant_at)
from .problems import (IngestError, NpcHyper, build_npc, gen_lmi, gen_qcqp, gen_socp_kkt,
                       load_npc, make_desk_1d, make_desk_qcqp, make_npc_blob_problem,
                       make_sharp_fixture, make_smooth_quadratic)
from .report import SolverReport, SubproblemCounters, TraceRecord, load_trace_csv

__version__ = "0.1.0"
