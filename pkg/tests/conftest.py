"""Shared builders for the test suite.

Random test systems are built well-conditioned on purpose (condition
number of a few): the assertions below probe algorithmic correctness
at tight tolerances, and conditioning noise would only blur them.
Physically scaled systems (farads, henries) are exercised through the
netlist benches instead.
"""

import numpy as np

from parmor.netlist import parse_netlist, stamp_mna
from parmor.sysmodel import system_from_matrices


def spd_matrix(rng, n, scale=1.0):
    """Random symmetric positive definite matrix, eigenvalues in ~[1, 5]."""
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T / n + np.eye(n))


def lowrank_spd(rng, n, rank, scale=1.0):
    """Random symmetric positive semidefinite matrix of exact rank."""
    u = rng.standard_normal((n, rank))
    return scale * (u @ u.T) / n


def random_rc_system(n, n_params, seed, m=1, sens_scale=0.05,
                     sens_rank=None):
    """Random RC-like system: SPD G0/C0, symmetric sensitivities, B = L.

    sens_rank=None gives full-rank SPD sensitivities; an integer plants
    that exact rank (the low-rank engine recovers those exactly).
    """
    rng = np.random.default_rng(seed)
    g0 = spd_matrix(rng, n)
    c0 = spd_matrix(rng, n)

    def sens():
        if sens_rank is None:
            return sens_scale * spd_matrix(rng, n)
        return sens_scale * lowrank_spd(rng, n, sens_rank)

    gsens = [sens() for _ in range(n_params)]
    csens = [sens() for _ in range(n_params)]
    b = rng.standard_normal((n, m))
    return system_from_matrices(
        g0, c0, gsens, csens, b, b,
        tuple(f"p{i + 1}" for i in range(n_params)),
        tuple(f"P{j + 1}" for j in range(m)))


def stamped(text):
    return stamp_mna(parse_netlist(text))
