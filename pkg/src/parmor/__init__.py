"""Parametric model order reduction for RC/RLC interconnect circuits.

The package reduces parameter-dependent MNA descriptions

    C(p) dx/dt = -G(p) x + B u,      y = L^T x,

where G(p) and C(p) are affine in a vector of process parameters p,
to small dense models that preserve multi-parameter transfer-function
moments around s = 0, p = 0. Four engines are provided: plain nominal
block-Krylov projection, single-expansion-point multi-parameter
matching, multi-point sampling, and a low-rank sensitivity scheme that
needs only one factorization of the nominal conductance matrix.
"""

from parmor.netlist import NetlistError, parse_netlist, stamp_mna
from parmor.kernels import (
    STATS,
    LowRankFactor,
    LuFactors,
    SingularMatrixError,
    block_orthonormalize,
    implicit_truncated_svd,
    krylov_block,
    lu_factor,
)
from parmor.sysmodel import (
    ParametricSystem,
    ReducedModel,
    assemble_at,
    load_model,
    project,
    save_model,
    system_from_matrices,
)
from parmor.reducers import (
    BasisSizeWarning,
    ReductionSpec,
    reduce_low_rank,
    reduce_multi_point,
    reduce_prima,
    reduce_single_point,
    reduce_system,
    verify_theorem1,
)
from parmor.analysis import (
    MomentTable,
    OracleScaleError,
    dominant_poles,
    eval_transfer,
    monte_carlo_poles,
    oracle_moments,
    passivity_check,
    sweep_compare,
)
from parmor.bench import gen_bench

__version__ = "0.1.0"

__all__ = [
    "NetlistError",
    "parse_netlist",
    "stamp_mna",
    "STATS",
    "LowRankFactor",
    "LuFactors",
    "SingularMatrixError",
    "block_orthonormalize",
    "implicit_truncated_svd",
    "krylov_block",
    "lu_factor",
    "ParametricSystem",
    "ReducedModel",
    "assemble_at",
    "load_model",
    "project",
    "save_model",
    "system_from_matrices",
    "BasisSizeWarning",
    "ReductionSpec",
    "reduce_low_rank",
    "reduce_multi_point",
    "reduce_prima",
    "reduce_single_point",
    "reduce_system",
    "verify_theorem1",
    "MomentTable",
    "OracleScaleError",
    "dominant_poles",
    "eval_transfer",
    "monte_carlo_poles",
    "oracle_moments",
    "passivity_check",
    "sweep_compare",
    "gen_bench",
    "__version__",
]
