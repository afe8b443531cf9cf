"""Reduction engines: nominal, single-point, multi-point, low-rank.

All engines build an orthonormal basis V and congruence-project the
parametric system onto it (see :func:`parmor.sysmodel.project`), which
preserves symmetry and passivity of RC/RLC descriptions. They differ in
which subspaces V must span:

``reduce_prima``
    Nominal block Krylov of A0 = -G0^-1 C0 seeded with R0 = G0^-1 B;
    matches the first k+1 moment blocks in s at the nominal point.

``reduce_single_point``
    All multi-parameter moment blocks of total order <= k around the
    single expansion point s = 0, p = 0, computed by the moment
    recurrence. With a per-parameter order cap ``k_param < k`` the
    engine switches to an operator-word enumeration (each retained
    cross term gets its own block), the accounting under which a
    one-parameter first-order-cross basis has (k^2+k+1)m columns.

``reduce_multi_point``
    A (k+1)-block nominal-style chain at each supplied parameter sample
    point, one factorization per sample.

``reduce_low_rank``
    The single-factorization scheme built on truncated SVDs of the
    generalized sensitivities -G0^-1 Gi and -G0^-1 Ci, computed
    matrix-implicitly. Per parameter, with U/V the scaled left and
    orthonormal right singular blocks of a sensitivity:

        chains(A0,  U_g,  depth k)      chains(A0T, -G0^-T V_g, depth k-1)
        chains(A0,  U_c,  depth k-1)    chains(A0T, -G0^-T V_c, depth k-2)

    where A0T = -G0^-T C0^T and negative depths drop the chain. The
    simplified variant keeps only the A0 chains and appends the right
    singular blocks themselves, roughly halving the basis. The final
    projection applies to the *full* sensitivity matrices, not their
    low-rank approximations.

:func:`verify_theorem1` checks the scheme's moment-preservation claim:
projecting the *nearby* system (the one whose sensitivities are exactly
the retained low-rank factors) with the computed basis reproduces that
system's multi-parameter moments up to total order k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from parmor import kernels
from parmor.kernels import (
    STATS,
    SingularMatrixError,
    block_orthonormalize,
    implicit_truncated_svd,
    krylov_block,
    lu_factor,
)
from parmor.analysis import (
    ORACLE_MAX_N,
    OracleScaleError,
    graded_multi_indices,
    oracle_moments,
    transfer_deviation,
)
from parmor.sysmodel import (
    ReducedModel,
    as_parameter_vector,
    assemble_at,
    project,
    system_from_matrices,
)

__all__ = [
    "BasisSizeWarning",
    "ReductionSpec",
    "reduce_system",
    "reduce_prima",
    "reduce_single_point",
    "reduce_multi_point",
    "reduce_low_rank",
    "prima_column_count",
    "single_point_column_count",
    "multi_point_column_count",
    "low_rank_column_count",
    "Theorem1Report",
    "verify_theorem1",
]


class BasisSizeWarning(UserWarning):
    """The candidate basis is large relative to the full system."""


@dataclass
class ReductionSpec:
    """Serializable description of one reduction run."""

    engine: str = "low_rank"
    k: int = 3
    k_param: int | None = None
    samples: tuple = ()
    svd_rank: int = 1
    svd_iters: int = 6
    simplified: bool = False
    defl_tol: float = 1e-10
    seed: int = 0

    def to_dict(self):
        doc = asdict(self)
        doc["samples"] = [list(map(float, s)) for s in self.samples]
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["samples"] = tuple(tuple(s) for s in doc.get("samples", ()))
        return cls(**doc)


def reduce_system(system, spec: ReductionSpec) -> ReducedModel:
    """Dispatch a ReductionSpec to the matching engine.

    The spec snapshot is embedded in the model's provenance record, so
    a saved model carries its own reduction recipe.
    """
    if spec.engine == "prima":
        model = reduce_prima(system, spec.k, defl_tol=spec.defl_tol)
    elif spec.engine == "single_point":
        model = reduce_single_point(system, spec.k, k_param=spec.k_param,
                                    defl_tol=spec.defl_tol)
    elif spec.engine == "multi_point":
        model = reduce_multi_point(system, spec.k, spec.samples,
                                   defl_tol=spec.defl_tol)
    elif spec.engine == "low_rank":
        model = reduce_low_rank(
            system, spec.k, svd_rank=spec.svd_rank, simplified=spec.simplified,
            k_param=spec.k_param, defl_tol=spec.defl_tol, seed=spec.seed,
            svd_iters=spec.svd_iters)
    else:
        raise ValueError(f"unknown engine {spec.engine!r}")
    model.provenance["reduction_spec"] = spec.to_dict()
    return model


# ---------------------------------------------------------------------------
# shared engine plumbing


def _counted(fun):
    def apply(block):
        STATS.operator_applies += 1
        return fun(block)
    return apply


def _factor_g0(system):
    """Factor G0, naming the floating unknowns when it is singular.

    A structurally singular G0 means some subnetwork has no DC path to
    ground; the offending set is the connected component of the zero
    pivot in the symmetrized nonzero pattern.
    """
    try:
        return lu_factor(system.g0)
    except SingularMatrixError as exc:
        names = system.unknown_names()
        if exc.column is None or exc.node_names or exc.column >= len(names):
            raise
        adjacency = abs(sp.csr_matrix(system.g0))
        _, labels = sp.csgraph.connected_components(adjacency, directed=False)
        component = np.nonzero(labels == labels[exc.column])[0]
        named = tuple(names[i] for i in component)
        raise SingularMatrixError(
            f"{exc}; floating unknowns: {', '.join(named)}",
            column=exc.column, node_names=named) from exc


class _NominalOps:
    """Counted operators around one factorization of G0."""

    def __init__(self, system):
        self.system = system
        self.factors = _factor_g0(system)
        self.r0 = self.factors.solve(_densify(system.b))
        self.a0 = _counted(lambda x: -self.factors.solve(system.c0 @ x))
        self.a0t = _counted(
            lambda x: -self.factors.solve_transpose(system.c0.T @ x))

    def jg(self, i):
        gi = self.system.sens[i][0]
        return _counted(lambda x: -self.factors.solve(gi @ x))

    def jc(self, i):
        ci = self.system.sens[i][1]
        return _counted(lambda x: -self.factors.solve(ci @ x))


def _densify(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


def _is_zero_matrix(mat):
    if sp.issparse(mat):
        return mat.nnz == 0 or not np.any(mat.data)
    return not np.any(mat)


def _finish(system, blocks, pre_columns, engine, extra=None, stats_before=None,
            defl_tol=1e-10, lowrank_factors=None):
    basis = block_orthonormalize(blocks, defl_tol=defl_tol)
    provenance = {
        "engine": engine,
        "n_full": system.n,
        "q": int(basis.shape[1]),
        "pre_deflation_columns": int(pre_columns),
        "defl_tol": defl_tol,
    }
    if extra:
        provenance.update(extra)
    if stats_before is not None:
        provenance["stats"] = STATS.delta(stats_before)
    return project(system, basis, provenance=provenance,
                   lowrank_factors=lowrank_factors)


# ---------------------------------------------------------------------------
# engines


def reduce_prima(system, k, *, defl_tol=1e-10) -> ReducedModel:
    """Nominal block-Krylov projection matching k+1 s-moment blocks."""
    if k < 0:
        raise ValueError("k must be >= 0")
    before = STATS.snapshot()
    ops = _NominalOps(system)
    blocks = krylov_block(ops.a0, ops.r0, k)
    return _finish(system, blocks, prima_column_count(k, system.m), "prima",
                   extra={"k": k}, stats_before=before, defl_tol=defl_tol)


def _cross_words(k, n_params, k_param):
    """Operator words with per-parameter degree <= k_param, total <= k.

    Letters: ('a',) applies A0 (degree: one s), ('g', i) applies
    -G0^-1 Gi (one p_i), ('c', i) applies -G0^-1 Ci (one s and one
    p_i). Word sets are closed under dropping the leftmost letter, so
    spanning every word block makes the congruence projection reproduce
    every moment assembled from them.
    """
    letters = [(("a",), 1, None)]
    for i in range(n_params):
        letters.append((("g", i), 1, i))
        letters.append((("c", i), 2, i))

    def pdeg(word, i):
        return sum(1 for letter in word if len(letter) == 2 and letter[1] == i)

    by_order = {0: [()]}
    for order in range(1, k + 1):
        rows = []
        for letter, weight, param in letters:
            prev = order - weight
            if prev < 0:
                continue
            for word in by_order[prev]:
                if param is not None and pdeg(word, param) + 1 > k_param:
                    continue
                rows.append((letter,) + word)
        by_order[order] = rows
    out = []
    for order in range(k + 1):
        out.extend(by_order[order])
    return out


def reduce_single_point(system, k, *, k_param=None,
                        defl_tol=1e-10) -> ReducedModel:
    """Single-expansion-point multi-parameter moment matching.

    Uniform mode (default) spans one block per moment multi-index of
    total order <= k, computed by the moment recurrence. A cap
    ``k_param < k`` switches to the operator-word enumeration described
    in :func:`_cross_words`, which matches every moment whose
    per-parameter order stays within the cap at the cost of one block
    per retained cross word.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    n_params = system.n_params
    if k_param is not None and (k_param < 0 or k_param > k):
        raise ValueError("k_param must lie in [0, k]")
    cross = k_param is not None and k_param < k and n_params > 0
    before = STATS.snapshot()
    ops = _NominalOps(system)

    blocks = []
    if not cross:
        jg = [ops.jg(i) for i in range(n_params)]
        jc = [ops.jc(i) for i in range(n_params)]
        table = {}
        for idx in graded_multi_indices(k, n_params):
            if sum(idx) == 0:
                table[idx] = ops.r0
            else:
                ks = idx[0]
                acc = np.zeros_like(ops.r0)
                if ks > 0:
                    acc += ops.a0(table[(ks - 1,) + idx[1:]])
                for i in range(n_params):
                    if idx[1 + i] > 0:
                        down = list(idx)
                        down[1 + i] -= 1
                        acc += jg[i](table[tuple(down)])
                        if ks > 0:
                            both = list(down)
                            both[0] -= 1
                            acc += jc[i](table[tuple(both)])
                table[idx] = acc
            blocks.append(table[idx])
        mode = "uniform"
    else:
        apply_letter = {("a",): ops.a0}
        for i in range(n_params):
            apply_letter[("g", i)] = ops.jg(i)
            apply_letter[("c", i)] = ops.jc(i)
        cache = {(): ops.r0}
        for word in _cross_words(k, n_params, k_param):
            if word not in cache:
                cache[word] = apply_letter[word[0]](cache[word[1:]])
            blocks.append(cache[word])
        mode = "cross"

    pre_columns = single_point_column_count(k, n_params, system.m,
                                            k_param=k_param)
    if pre_columns > system.n / 2:
        warnings.warn(
            f"single-point candidate basis has {pre_columns} columns, more "
            f"than half the full order {system.n}; consider multi-point or "
            "low-rank reduction", BasisSizeWarning, stacklevel=2)
    return _finish(system, blocks, pre_columns, "single_point",
                   extra={"k": k, "k_param": k_param, "mode": mode},
                   stats_before=before, defl_tol=defl_tol)


def reduce_multi_point(system, k, samples, *, defl_tol=1e-10) -> ReducedModel:
    """Concatenated nominal-style bases at several parameter samples.

    Performs exactly one factorization per sample; the basis matches
    k+1 s-moment blocks of the assembled system at every sample point.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    samples = [as_parameter_vector(s, system.n_params) for s in samples]
    if not samples:
        raise ValueError("multi_point needs at least one sample")
    before = STATS.snapshot()
    blocks = []
    for index, point in enumerate(samples):
        g, c, b, _ = assemble_at(system, point)
        try:
            factors = lu_factor(g)
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                f"G(p) singular at sample {index} (p = {point.tolist()}): "
                f"{exc}", column=exc.column) from exc
        apply_a = _counted(lambda x, f=factors, cm=c: -f.solve(cm @ x))
        blocks.extend(krylov_block(apply_a, factors.solve(_densify(b)), k))
    pre_columns = multi_point_column_count(k, system.m, len(samples))
    return _finish(system, blocks, pre_columns, "multi_point",
                   extra={"k": k, "samples": [s.tolist() for s in samples]},
                   stats_before=before, defl_tol=defl_tol)


def reduce_low_rank(system, k, *, svd_rank=1, simplified=False, k_param=None,
                    defl_tol=1e-10, seed=0, svd_iters=6) -> ReducedModel:
    """Low-rank sensitivity projection with one nominal factorization.

    ``k`` controls the nominal chain depth; ``k_param`` (default k) the
    sensitivity chain depths, allowing a lower matching order for the
    parameters than for s. ``svd_rank`` bounds the retained rank per
    sensitivity; sensitivities that are structurally zero are skipped.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    kp = k if k_param is None else k_param
    if kp < 0 or kp > k:
        raise ValueError("k_param must lie in [0, k]")
    if svd_rank < 1:
        raise ValueError("svd_rank must be >= 1")
    before = STATS.snapshot()
    ops = _NominalOps(system)
    n = system.n

    g_factors = []
    c_factors = []
    for i, (gi, ci) in enumerate(system.sens):
        for which, mat, bucket in (("g", gi, g_factors), ("c", ci, c_factors)):
            target = f"-G0^-1 {'G' if which == 'g' else 'C'}{i + 1}"
            if _is_zero_matrix(mat):
                bucket.append(kernels._empty_factor(n, target))
                continue
            rank = min(svd_rank, n)
            factor = implicit_truncated_svd(
                _counted(lambda x, m=mat: -ops.factors.solve(m @ x)),
                _counted(lambda y, m=mat: -(m.T @ ops.factors.solve_transpose(y))),
                n, rank, iters=svd_iters,
                seed=np.random.SeedSequence([seed, i, 0 if which == "g" else 1]),
                target=target)
            bucket.append(factor)

    blocks = list(krylov_block(ops.a0, ops.r0, k))
    for i in range(system.n_params):
        fg, fc = g_factors[i], c_factors[i]
        if fg.rank:
            blocks.extend(krylov_block(ops.a0, fg.u_hat, kp))
            if simplified:
                blocks.append(fg.v_hat)
            elif kp - 1 >= 0:
                seed_t = -ops.factors.solve_transpose(fg.v_hat)
                blocks.extend(krylov_block(ops.a0t, seed_t, kp - 1))
        if fc.rank:
            if kp - 1 >= 0:
                blocks.extend(krylov_block(ops.a0, fc.u_hat, kp - 1))
            if simplified:
                blocks.append(fc.v_hat)
            elif kp - 2 >= 0:
                seed_t = -ops.factors.solve_transpose(fc.v_hat)
                blocks.extend(krylov_block(ops.a0t, seed_t, kp - 2))

    pre_columns = low_rank_column_count(
        k, system.m,
        [f.rank for f in g_factors], [f.rank for f in c_factors],
        simplified=simplified, k_param=k_param)
    factors_doc = {"g": g_factors, "c": c_factors}
    extra = {
        "k": k,
        "k_param": kp,
        "svd_rank": svd_rank,
        "simplified": simplified,
        "seed": seed,
        "factor_ranks": {
            "g": [f.rank for f in g_factors],
            "c": [f.rank for f in c_factors],
        },
        "factor_sigmas": {
            "g": [list(map(float, f.sigma)) for f in g_factors],
            "c": [list(map(float, f.sigma)) for f in c_factors],
        },
    }
    return _finish(system, blocks, pre_columns, "low_rank", extra=extra,
                   stats_before=before, defl_tol=defl_tol,
                   lowrank_factors=factors_doc)


# ---------------------------------------------------------------------------
# basis-size accounting (pre-deflation column counts)


def prima_column_count(k, m):
    return (k + 1) * m


def single_point_column_count(k, n_params, m, k_param=None):
    """Pre-deflation column count of reduce_single_point.

    Uniform mode: one block per multi-index of total order <= k, i.e.
    binom(k + n_params + 1, n_params + 1) blocks of m columns. Cross
    mode (k_param < k): one block per retained operator word; for one
    parameter capped at first order this is the classical
    (k^2 + k + 1) m count.
    """
    if k_param is not None and k_param < k and n_params > 0:
        return len(_cross_words(k, n_params, k_param)) * m
    return math.comb(k + n_params + 1, n_params + 1) * m


def multi_point_column_count(k, m, n_samples):
    return n_samples * (k + 1) * m


def low_rank_column_count(k, m, g_ranks, c_ranks, simplified=False,
                          k_param=None):
    """Pre-deflation column count of reduce_low_rank.

    Full variant: (k+1)m for the nominal chain plus, per parameter,
    (2k_p + 1) columns per retained G-rank and (2k_p - 1) per retained
    C-rank (the A0 and A0T chains). Simplified variant: (k_p + 2) and
    (k_p + 1) respectively. Consistent with the O((4 r n_p + m) k) and
    O((2 r n_p + m) k) scalings of the scheme.
    """
    kp = k if k_param is None else k_param
    total = (k + 1) * m
    for rank in g_ranks:
        if simplified:
            total += rank * (kp + 2)
        else:
            total += rank * ((kp + 1) + max(kp, 0))
    for rank in c_ranks:
        if simplified:
            total += rank * (max(kp, 0) + 1)
        else:
            total += rank * (max(kp, 0) + max(kp - 1, 0))
    return total


# ---------------------------------------------------------------------------
# moment-preservation check


@dataclass(frozen=True)
class Theorem1Report:
    """Moment comparison between original, nearby, and projected systems.

    ``dev_nearby_vs_projected`` is the preservation claim proper: the
    congruence projection of the nearby system (whose sensitivities are
    exactly the retained low-rank factors) must reproduce that system's
    moments up to total order k. ``dev_original_vs_projected`` is
    bounded only by the SVD truncation error, and
    ``dev_original_vs_model`` reports the shipped model (which projects
    the full sensitivities) against the original system.
    """

    k: int
    tolerance: float
    dev_nearby_vs_projected: float
    dev_original_vs_projected: float
    dev_original_vs_model: float

    @property
    def passed(self):
        return self.dev_nearby_vs_projected <= self.tolerance


def verify_theorem1(system, model, k, tolerance=1e-8) -> Theorem1Report:
    """Oracle check of the low-rank scheme's moment preservation.

    Requires a model from :func:`reduce_low_rank` (it carries the
    retained factors). Refuses systems beyond the oracle size guard.
    """
    if system.n > ORACLE_MAX_N:
        raise OracleScaleError(
            f"verification refuses order {system.n} > {ORACLE_MAX_N}")
    if not model.lowrank_factors:
        raise ValueError("model carries no low-rank factors; "
                         "verify_theorem1 needs a reduce_low_rank model")
    g0 = _densify(system.g0)
    gsens = []
    csens = []
    for i in range(system.n_params):
        fg = model.lowrank_factors["g"][i]
        fc = model.lowrank_factors["c"][i]
        gsens.append(-(g0 @ fg.matrix()))
        csens.append(-(g0 @ fc.matrix()))
    nearby = system_from_matrices(
        g0, _densify(system.c0), gsens, csens,
        b=_densify(system.b), l=_densify(system.l),
        param_names=system.param_names, port_names=system.port_names)
    projected = project(nearby, model.basis)

    table_orig = oracle_moments(system, k)
    table_near = oracle_moments(nearby, k)
    table_proj = oracle_moments(projected, k)
    table_model = oracle_moments(model, k)

    return Theorem1Report(
        k=k,
        tolerance=tolerance,
        dev_nearby_vs_projected=transfer_deviation(
            table_proj, table_near, projected.l, nearby.l),
        dev_original_vs_projected=transfer_deviation(
            table_proj, table_orig, projected.l, system.l),
        dev_original_vs_model=transfer_deviation(
            table_model, table_orig, model.l, system.l),
    )
