"""Reference analyses: moment oracle, transfer sweeps, poles, passivity.

The moment oracle is the package's ground truth. For the series
expansion of X(s, p) = (G(p) + s C(p))^-1 B around s = 0, p = 0, the
state moment blocks obey the recurrence

    M(ks, k1, ..., knp) = A0 M(ks-1, ...)
                        + sum_i (-G0^-1 Gi) M(..., ki-1, ...)
                        + sum_i (-G0^-1 Ci) M(ks-1, ..., ki-1, ...)

with A0 = -G0^-1 C0, M(0, ..., 0) = G0^-1 B, and terms with a negative
index dropped: expanding the resolvent as a geometric series and
grouping words by their leftmost operator yields exactly these three
contributions. The recurrence itself is validated in the test suite
against a symbolic multivariate Taylor expansion on a dense 2x2
instance before anything downstream trusts it.

Everything here runs on dense LAPACK paths (or SciPy's own sparse
solver for transfer sweeps) and never touches the instrumented kernels
in :mod:`parmor.kernels`, so oracles stay independent of the engines
they judge and do not disturb the operation counters.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from parmor.sysmodel import assemble_at, as_parameter_vector

__all__ = [
    "OracleScaleError",
    "MomentTable",
    "graded_multi_indices",
    "oracle_moments",
    "transfer_deviation",
    "eval_transfer",
    "PoleSet",
    "dominant_poles",
    "pair_pole_errors",
    "PassivityReport",
    "passivity_check",
    "SweepResult",
    "sweep_compare",
    "MonteCarloResult",
    "monte_carlo_poles",
]

# Dense-oracle guard: above this order, use the engines, not the oracle.
ORACLE_MAX_N = 500

# Generalized eigenvalues beyond this magnitude are treated as the
# pencil's infinite eigenvalues (singular-C directions).
INFINITE_POLE_MAGNITUDE = 1e14


class OracleScaleError(ValueError):
    """Dense reference computation refused above its size guard."""


def graded_multi_indices(max_total_order, n_params):
    """All (ks, k1, .., knp) with sum <= max_total_order, graded lex order.

    Within one total order, indices are ordered s-degree first and
    descending, which makes enumeration deterministic for golden files.
    """
    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for rest in compositions(total - head, parts - 1):
                yield (head,) + rest

    out = []
    for order in range(max_total_order + 1):
        out.extend(compositions(order, n_params + 1))
    return out


@dataclass(frozen=True)
class MomentTable:
    """State moment blocks keyed by multi-index (ks, k1, ..., knp)."""

    entries: dict
    max_total_order: int
    n: int
    m: int

    def transfer(self, l_matrix):
        """Output-side m x m moment blocks L^T M(idx)."""
        lt = (l_matrix.toarray() if sp.issparse(l_matrix)
              else np.asarray(l_matrix, dtype=float)).T
        return {idx: lt @ block for idx, block in self.entries.items()}


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


def oracle_moments(obj, max_total_order) -> MomentTable:
    """Dense reference moments of a system or reduced model.

    Refuses orders above ORACLE_MAX_N unknowns; the oracle exists to
    judge reduced models and small references, not to scale.
    """
    n = obj.g0.shape[0]
    if n > ORACLE_MAX_N:
        raise OracleScaleError(
            f"oracle refuses order {n} > {ORACLE_MAX_N}; "
            "use the engines for systems this large")
    if max_total_order < 0:
        raise ValueError("max_total_order must be >= 0")
    g0 = _dense(obj.g0)
    c0 = _dense(obj.c0)
    gsens = [_dense(gi) for gi, _ in obj.sens]
    csens = [_dense(ci) for _, ci in obj.sens]
    b = _dense(obj.b)
    lu_piv = scipy.linalg.lu_factor(g0)
    n_params = len(obj.sens)

    entries = {}
    for idx in graded_multi_indices(max_total_order, n_params):
        if sum(idx) == 0:
            entries[idx] = scipy.linalg.lu_solve(lu_piv, b)
            continue
        ks = idx[0]
        rhs = np.zeros_like(b)
        if ks > 0:
            rhs += c0 @ entries[(ks - 1,) + idx[1:]]
        for i in range(n_params):
            ki = idx[1 + i]
            if ki > 0:
                down = list(idx)
                down[1 + i] -= 1
                rhs += gsens[i] @ entries[tuple(down)]
                if ks > 0:
                    both = list(idx)
                    both[0] -= 1
                    both[1 + i] -= 1
                    rhs += csens[i] @ entries[tuple(both)]
        entries[idx] = -scipy.linalg.lu_solve(lu_piv, rhs)
    return MomentTable(entries=entries, max_total_order=max_total_order,
                       n=n, m=b.shape[1])


def transfer_deviation(table_a, table_b, l_a, l_b, indices=None,
                       floor_scale=1e-6):
    """Max relative Frobenius deviation between output moment blocks.

    Blocks are compared through L^T M so full and reduced tables of
    different state dimensions are commensurable. Moment blocks of
    different s-orders carry different physical units, so every block
    is normalized by its own reference norm, floored at ``floor_scale``
    times the largest reference block of the same s-order: a
    structurally zero cross moment is then judged against its unit
    class rather than against its own rounding noise (double precision
    cannot certify the relative accuracy of an exact zero).
    """
    ta = table_a.transfer(l_a)
    tb = table_b.transfer(l_b)
    keys = indices if indices is not None else sorted(
        set(ta) & set(tb), key=lambda t: (sum(t), t))
    class_scale = {}
    for key in keys:
        norm = np.linalg.norm(tb[key])
        class_scale[key[0]] = max(class_scale.get(key[0], 0.0), norm)
    worst = 0.0
    for key in keys:
        num = np.linalg.norm(ta[key] - tb[key])
        den = max(np.linalg.norm(tb[key]),
                  floor_scale * class_scale[key[0]], 1e-300)
        worst = max(worst, float(num / den))
    return worst


def eval_transfer(obj, p, s):
    """Transfer matrix H(s, p) = L^T (G(p) + s C(p))^-1 B.

    Sparse systems go through SciPy's complex sparse LU; reduced models
    through a dense solve. ``s`` is the complex frequency in rad/s.
    """
    g, c, b, l = assemble_at(obj, p)
    s = complex(s)
    if sp.issparse(g):
        a = (g + s * c).tocsc().astype(complex)
        try:
            lu = spla.splu(a)
        except RuntimeError as exc:
            raise ArithmeticError(
                f"transfer solve singular at s={s!r}") from exc
        x = lu.solve(_dense(b).astype(complex))
        return _dense(l).T @ x
    a = np.asarray(g, dtype=complex) + s * np.asarray(c, dtype=complex)
    x = np.linalg.solve(a, np.asarray(b, dtype=complex))
    return np.asarray(l).T @ x


@dataclass(frozen=True)
class PoleSet:
    """Finite pencil eigenvalues sorted by dominance (ascending |pole|)."""

    poles: np.ndarray
    requested: int
    complete: bool


def dominant_poles(obj, p, count) -> PoleSet:
    """The ``count`` smallest-magnitude finite poles of (G(p), C(p)).

    Poles are eigenvalues lam of -G x = lam C x; eigenvalues beyond
    1e14 in magnitude (or non-finite) belong to the pencil's point at
    infinity and are filtered. If fewer finite poles exist than were
    requested, all of them are returned and ``complete`` is False.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    g, c, _, _ = assemble_at(obj, p)
    eigvals = scipy.linalg.eigvals(-_dense(g), _dense(c))
    finite = eigvals[np.isfinite(eigvals)
                     & (np.abs(eigvals) < INFINITE_POLE_MAGNITUDE)]
    # Sort by magnitude, then by angle, so ties order deterministically.
    order = np.lexsort((np.angle(finite), np.abs(finite)))
    finite = finite[order]
    return PoleSet(poles=finite[:count], requested=count,
                   complete=finite.size >= count)


def pair_pole_errors(reference, candidate):
    """Greedy nearest-neighbor pole pairing, by dominance order.

    Returns (pairs, rel_errors) where pairs[i] is the candidate pole
    matched to reference[i].
    """
    available = list(candidate)
    pairs = []
    errors = []
    for pole in reference:
        if not available:
            break
        dist = [abs(pole - other) for other in available]
        best = int(np.argmin(dist))
        match = available.pop(best)
        pairs.append(match)
        errors.append(abs(pole - match) / max(abs(pole), 1e-300))
    return np.asarray(pairs), np.asarray(errors)


@dataclass(frozen=True)
class PassivityReport:
    """Symmetrized-eigenvalue passivity margins per parameter point."""

    points: tuple
    tol_scale: float

    @property
    def passed(self):
        return all(entry["passed"] for entry in self.points)

    @property
    def worst_margin(self):
        return min(
            min(entry["margin_g"], entry["margin_c"]) for entry in self.points)


def passivity_check(obj, points=None, tol_scale=1e-10) -> PassivityReport:
    """Check min eig of sym(G(p)) and sym(C(p)) >= -tol_scale * norm.

    ``points`` defaults to the nominal point. For RC models the
    matrices are symmetric; for RLC the symmetrized form is exactly the
    congruence-preserved quantity, so the same test applies.
    """
    if points is None:
        points = [np.zeros(obj.n_params)]
    rows = []
    for p in points:
        g, c, _, _ = assemble_at(obj, p)
        entry = {"p": list(map(float, as_parameter_vector(p, obj.n_params)))}
        ok = True
        for label, mat in (("g", g), ("c", c)):
            symm = _dense(mat)
            symm = 0.5 * (symm + symm.T)
            eigs = scipy.linalg.eigvalsh(symm)
            norm = float(np.abs(eigs).max()) if eigs.size else 0.0
            min_eig = float(eigs.min()) if eigs.size else 0.0
            margin = min_eig / norm if norm > 0.0 else 0.0
            entry[f"min_eig_{label}"] = min_eig
            entry[f"norm_{label}"] = norm
            entry[f"margin_{label}"] = margin
            ok = ok and min_eig >= -tol_scale * norm
        entry["passed"] = ok
        rows.append(entry)
    return PassivityReport(points=tuple(rows), tol_scale=tol_scale)


@dataclass(frozen=True)
class SweepResult:
    """Frequency-sweep comparison of a full system against models."""

    freqs_hz: np.ndarray
    p: np.ndarray
    h_full: np.ndarray            # (nf, m, m) complex
    h_models: tuple               # tuple of (nf, m, m) complex arrays
    model_labels: tuple
    max_rel_errors: tuple         # per model, max over sweep and ports
    per_record_errors: np.ndarray  # (nf, n_models)

    def to_rows(self):
        """Flat rows for CSV emission, one per frequency record."""
        nf, m, _ = self.h_full.shape
        header = ["freq_hz"]
        for i in range(m):
            for j in range(m):
                header += [f"h_full_re_{i + 1}{j + 1}", f"h_full_im_{i + 1}{j + 1}"]
        for label in self.model_labels:
            header.append(f"relerr_{label}")
        rows = []
        for r in range(nf):
            row = [self.freqs_hz[r]]
            for i in range(m):
                for j in range(m):
                    row += [self.h_full[r, i, j].real, self.h_full[r, i, j].imag]
            row.extend(self.per_record_errors[r])
            rows.append(row)
        return header, rows


def _relative_entry_error(h_model, h_ref):
    ref_mag = np.abs(h_ref)
    floor = 1e-12 * ref_mag.max() if ref_mag.size else 0.0
    denom = np.maximum(ref_mag, max(floor, 1e-300))
    return float((np.abs(h_model - h_ref) / denom).max())


def sweep_compare(system, models, p, freqs_hz, labels=None) -> SweepResult:
    """Sweep H over a frequency grid and measure per-model deviation.

    Error metric per record: max over port pairs of
    |H_model - H_full| / |H_full| (floored at 1e-12 of the record's
    largest entry), which upper-bounds the magnitude error plotted in
    reports.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    p = as_parameter_vector(p, system.n_params)
    models = list(models)
    if labels is None:
        labels = []
        for k, model in enumerate(models):
            engine = model.provenance.get("engine", "model") \
                if hasattr(model, "provenance") else "model"
            labels.append(f"{engine}_q{model.q}_{k}" if hasattr(model, "q")
                          else f"model_{k}")
    h_full = []
    h_models = [[] for _ in models]
    for f in freqs_hz:
        s = 2j * np.pi * f
        h_full.append(eval_transfer(system, p, s))
        for slot, model in enumerate(models):
            h_models[slot].append(eval_transfer(model, p, s))
    h_full = np.asarray(h_full)
    h_models = tuple(np.asarray(stack) for stack in h_models)
    per_record = np.zeros((freqs_hz.size, len(models)))
    for slot, stack in enumerate(h_models):
        for r in range(freqs_hz.size):
            per_record[r, slot] = _relative_entry_error(stack[r], h_full[r])
    max_errors = tuple(float(per_record[:, j].max()) if freqs_hz.size else 0.0
                       for j in range(len(models)))
    return SweepResult(
        freqs_hz=freqs_hz, p=p, h_full=h_full, h_models=h_models,
        model_labels=tuple(labels), max_rel_errors=max_errors,
        per_record_errors=per_record,
    )


@dataclass(frozen=True)
class MonteCarloResult:
    """Dominant-pole accuracy statistics over random parameter draws."""

    samples: np.ndarray           # (n_samples, n_params) parameter draws
    pole_count: int
    rel_errors: np.ndarray        # (n_kept, pole_count)
    kept_indices: np.ndarray
    skipped: int
    seed: int
    sigma: np.ndarray
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    @property
    def max_rel_error(self):
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0

    @property
    def mean_rel_error(self):
        return float(self.rel_errors.mean()) if self.rel_errors.size else 0.0


def _mc_workers():
    raw = os.environ.get("PARMOR_THREADS", "")
    try:
        workers = int(raw)
    except ValueError:
        workers = 1
    return max(workers, 1)


def monte_carlo_poles(system, model, sigma, n_samples, pole_count,
                      seed=0, bins=20) -> MonteCarloResult:
    """Compare dominant poles of model vs full over truncated-normal draws.

    Each parameter is drawn N(0, sigma_i^2) and clipped at +-3 sigma_i
    (the declared maximum variation), which keeps element values
    physical. Draws are generated up front from the seed, so results
    are bit-identical no matter how many worker threads the
    PARMOR_THREADS environment variable allows. Samples whose pole
    computation fails are skipped and counted.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float),
                            (system.n_params,)).copy()
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((n_samples, system.n_params)) * sigma
    draws = np.clip(draws, -3.0 * sigma, 3.0 * sigma)

    def one(sample_idx):
        p = draws[sample_idx]
        try:
            full = dominant_poles(system, p, pole_count)
            red = dominant_poles(model, p, pole_count)
            if not full.complete:
                return None
            _, errors = pair_pole_errors(full.poles, red.poles)
            if errors.size < pole_count or not np.all(np.isfinite(errors)):
                return None
            return errors
        except (ArithmeticError, np.linalg.LinAlgError, ValueError):
            return None

    workers = _mc_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_samples)))
    else:
        results = [one(i) for i in range(n_samples)]

    kept = [i for i, res in enumerate(results) if res is not None]
    rel = np.asarray([results[i] for i in kept]) if kept else \
        np.zeros((0, pole_count))
    flat = rel.ravel()
    if flat.size:
        counts, edges = np.histogram(flat, bins=bins)
    else:
        counts, edges = np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    return MonteCarloResult(
        samples=draws, pole_count=pole_count, rel_errors=rel,
        kept_indices=np.asarray(kept, dtype=int),
        skipped=n_samples - len(kept), seed=seed, sigma=sigma,
        histogram_counts=counts, histogram_edges=edges,
    )
