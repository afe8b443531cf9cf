"""System and model containers: assembly, projection, serialization.

A :class:`ParametricSystem` holds the sparse affine MNA description

    G(p) = g0 + sum_i p_i * sens[i][0],
    C(p) = c0 + sum_i p_i * sens[i][1],

with input/output maps ``b`` and ``l``. A :class:`ReducedModel` holds
the dense congruence projection of such a system together with the
basis and a provenance record. Both expose the same matrix attribute
protocol (g0, c0, sens, b, l), so assembly, transfer evaluation and the
moment oracle run unchanged on either.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ParametricSystem",
    "ParameterPoint",
    "ReducedModel",
    "system_from_matrices",
    "assemble_at",
    "project",
    "save_model",
    "load_model",
    "MODEL_SCHEMA_VERSION",
]

MODEL_SCHEMA_VERSION = 1

# Serialization refuses matrices beyond this entry count; the format is
# for reduced models and small reference systems, not full designs.
MAX_SAVE_ENTRIES = 1_000_000


def _frozen(array):
    out = np.asarray(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParametricSystem:
    """Affine parametric MNA system with sparse matrices."""

    g0: sp.spmatrix
    c0: sp.spmatrix
    sens: tuple          # ((G1, C1), (G2, C2), ...)
    b: sp.spmatrix
    l: sp.spmatrix
    node_names: tuple = ()
    branch_names: tuple = ()
    param_names: tuple = ()
    port_names: tuple = ()

    @property
    def n(self):
        return self.g0.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def n_params(self):
        return len(self.sens)

    def unknown_names(self):
        return tuple(self.node_names) + tuple(
            f"i({name})" for name in self.branch_names)


@dataclass(frozen=True)
class ParameterPoint:
    """An ordered parameter vector, optionally labeled by name."""

    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_1d(self.values)))

    def __len__(self):
        return self.values.size


def as_parameter_vector(p, n_params):
    """Normalize scalars/sequences/ParameterPoint to a validated vector."""
    if isinstance(p, ParameterPoint):
        values = p.values
    else:
        values = np.atleast_1d(np.asarray(p, dtype=float))
    if values.ndim != 1 or values.size != n_params:
        raise ValueError(
            f"parameter point has {values.size} entries, system has "
            f"{n_params} parameters")
    return values


@dataclass(frozen=True)
class ReducedModel:
    """Dense reduced-order model with its projection basis."""

    g0: np.ndarray
    c0: np.ndarray
    sens: tuple
    b: np.ndarray
    l: np.ndarray
    basis: np.ndarray
    provenance: dict = field(default_factory=dict)
    lowrank_factors: dict | None = None
    param_names: tuple = ()
    port_names: tuple = ()

    @property
    def q(self):
        return self.g0.shape[0]

    @property
    def n(self):
        # Matrix-protocol alias so oracles treat models like systems.
        return self.q

    @property
    def n_full(self):
        return self.basis.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def n_params(self):
        return len(self.sens)


def system_from_matrices(g0, c0, gsens=(), csens=(), b=None, l=None,
                         param_names=(), port_names=()):
    """Build a ParametricSystem from explicit (dense or sparse) matrices.

    Dense inputs are converted to CSC. Handy for tests, synthetic
    systems and the low-rank "nearby" system used by the moment checks.
    """
    def to_csc(mat):
        return mat.tocsc() if sp.issparse(mat) else sp.csc_matrix(
            np.atleast_2d(np.asarray(mat, dtype=float)))

    g0 = to_csc(g0)
    n = g0.shape[0]
    if b is None:
        raise ValueError("b is required")
    b = to_csc(b)
    l = b.copy() if l is None else to_csc(l)
    gsens = list(gsens)
    csens = list(csens)
    count = max(len(gsens), len(csens))
    zero = sp.csc_matrix((n, n))
    sens = []
    for i in range(count):
        gi = to_csc(gsens[i]) if i < len(gsens) and gsens[i] is not None else zero.copy()
        ci = to_csc(csens[i]) if i < len(csens) and csens[i] is not None else zero.copy()
        sens.append((gi, ci))
    if not param_names:
        param_names = tuple(f"p{i + 1}" for i in range(count))
    return ParametricSystem(
        g0=g0, c0=to_csc(c0), sens=tuple(sens), b=b, l=l,
        node_names=tuple(f"n{i + 1}" for i in range(n)),
        param_names=tuple(param_names),
        port_names=tuple(port_names) or tuple(
            f"P{j + 1}" for j in range(b.shape[1])),
    )


def assemble_at(obj, p):
    """Evaluate (G(p), C(p), B, L) for a system or a reduced model."""
    values = as_parameter_vector(p, obj.n_params)
    g = obj.g0.copy()
    c = obj.c0.copy()
    for value, (gi, ci) in zip(values, obj.sens):
        if value != 0.0:
            g = g + value * gi
            c = c + value * ci
    return g, c, obj.b, obj.l


def project(system, basis, provenance=None, lowrank_factors=None):
    """Congruence-project a system onto an orthonormal basis V.

    Returns a ReducedModel with g = V^T G V (and likewise for every
    sensitivity), b = V^T B, l = V^T L. Rejects a basis whose columns
    are not orthonormal to 1e-8.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != system.n:
        raise ValueError(
            f"basis shape {basis.shape} does not match system order {system.n}")
    gram_err = np.abs(basis.T @ basis - np.eye(basis.shape[1])).max() \
        if basis.shape[1] else 0.0
    if gram_err > 1e-8:
        raise ValueError(
            f"basis is not orthonormal (max |V^T V - I| = {gram_err:.3e})")

    def reduce_mat(mat):
        half = mat @ basis
        half = half.toarray() if sp.issparse(half) else np.asarray(half)
        return _frozen(basis.T @ half)

    def reduce_tall(mat):
        out = basis.T @ (mat.toarray() if sp.issparse(mat) else np.asarray(mat))
        return _frozen(out)

    sens = tuple((reduce_mat(gi), reduce_mat(ci)) for gi, ci in system.sens)
    return ReducedModel(
        g0=reduce_mat(system.g0),
        c0=reduce_mat(system.c0),
        sens=sens,
        b=reduce_tall(system.b),
        l=reduce_tall(system.l),
        basis=_frozen(basis),
        provenance=dict(provenance or {}),
        lowrank_factors=lowrank_factors,
        param_names=tuple(system.param_names),
        port_names=tuple(system.port_names),
    )


def _check_size(name, array):
    if array.size > MAX_SAVE_ENTRIES:
        raise ValueError(
            f"matrix {name!r} has {array.size} entries, exceeding the "
            f"{MAX_SAVE_ENTRIES} limit of the model exchange format")


def _encode(name, array):
    array = np.asarray(array, dtype=float)
    _check_size(name, array)
    return {"shape": list(array.shape), "data": array.ravel().tolist()}


def _decode(name, payload):
    shape = tuple(payload["shape"])
    if int(np.prod(shape)) > MAX_SAVE_ENTRIES:
        raise ValueError(
            f"matrix {name!r} in model file exceeds the "
            f"{MAX_SAVE_ENTRIES}-entry limit")
    return _frozen(np.asarray(payload["data"], dtype=float).reshape(shape))


def save_model(model: ReducedModel, path):
    """Write a reduced model to the JSON exchange format."""
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": "reduced_model",
        "q": model.q,
        "n_full": model.n_full,
        "m": model.m,
        "n_params": model.n_params,
        "param_names": list(model.param_names),
        "port_names": list(model.port_names),
        "g0": _encode("g0", model.g0),
        "c0": _encode("c0", model.c0),
        "gsens": [_encode(f"gsens[{i}]", g) for i, (g, _) in enumerate(model.sens)],
        "csens": [_encode(f"csens[{i}]", c) for i, (_, c) in enumerate(model.sens)],
        "b": _encode("b", model.b),
        "l": _encode("l", model.l),
        "basis": _encode("basis", model.basis),
        "provenance": model.provenance,
    }
    if model.lowrank_factors is not None:
        doc["lowrank_factors"] = {
            kind: [
                {
                    "u_hat": _encode("u_hat", fac.u_hat),
                    "v_hat": _encode("v_hat", fac.v_hat),
                    "sigma": list(map(float, fac.sigma)),
                    "target": fac.target,
                }
                for fac in factors
            ]
            for kind, factors in model.lowrank_factors.items()
        }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=1)
        handle.write("\n")


def load_model(path) -> ReducedModel:
    """Read a reduced model from the JSON exchange format."""
    from parmor.kernels import LowRankFactor  # local: avoid import cycle

    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("kind") != "reduced_model":
        raise ValueError(f"{path}: not a reduced-model file")
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(
            f"{path}: unsupported schema version {doc.get('schema_version')}")
    sens = tuple(
        (_decode("gsens", g), _decode("csens", c))
        for g, c in zip(doc["gsens"], doc["csens"])
    )
    factors = None
    if "lowrank_factors" in doc:
        factors = {
            kind: [
                LowRankFactor(
                    u_hat=_decode("u_hat", fac["u_hat"]),
                    v_hat=_decode("v_hat", fac["v_hat"]),
                    sigma=np.asarray(fac["sigma"], dtype=float),
                    target=fac.get("target", ""),
                )
                for fac in entries
            ]
            for kind, entries in doc["lowrank_factors"].items()
        }
    return ReducedModel(
        g0=_decode("g0", doc["g0"]),
        c0=_decode("c0", doc["c0"]),
        sens=sens,
        b=_decode("b", doc["b"]),
        l=_decode("l", doc["l"]),
        basis=_decode("basis", doc["basis"]),
        provenance=doc.get("provenance", {}),
        lowrank_factors=factors,
        param_names=tuple(doc.get("param_names", ())),
        port_names=tuple(doc.get("port_names", ())),
    )
