"""Deterministic benchmark netlist generators.

Each generator returns netlist source text (see :mod:`parmor.netlist`
for the grammar). All of them keep G0 nonsingular by construction:
every node has a DC path to ground through resistors (and inductors),
supplied by a driver or termination resistor where the topology alone
would leave the network floating.

Element values carry an optional multiplicative jitter drawn from a
seeded generator, so "the same bench" is reproducible byte for byte
while avoiding the spectral degeneracies of perfectly uniform chains.

Parameter sensitivities are emitted as relative perturbations: a
coefficient is ``weight * stamped_quantity``, so p_i = 0.1 means a ten
percent increase of the affected conductances/capacitances/inductances
at the peak of the weight profile. Profiles are smooth (sin^2 bumps)
along the structure; smooth localized variation is what gives the
generalized sensitivities -G0^-1 Gi and -G0^-1 Ci their fast singular
value decay, which the low-rank engine exploits.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "gen_bench",
    "BENCH_NAMES",
    "rc_ladder",
    "rc_mesh",
    "rc_tree",
    "coupled_rlc_bus",
]


def _fmt(value):
    return f"{value:.9g}"


def _jitter_factors(rng, count, jitter):
    if jitter < 0 or jitter >= 1:
        raise ValueError("jitter must lie in [0, 1)")
    return 1.0 + jitter * (2.0 * rng.random(count) - 1.0)


def _band_weight(t, n_params, index):
    """Smooth sin^2 bump for parameter ``index`` at position t in [0, 1].

    Bands are disjoint, centered at (index + 0.5) / n_params, each half
    a slot wide, so every parameter touches its own stretch of the
    structure and nowhere else.
    """
    center = (index + 0.5) / n_params
    width = 0.5 / n_params
    u = (t - (center - width / 2.0)) / width
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return math.sin(math.pi * u) ** 2


def _sens_clause(keyword, pairs):
    terms = [f"{name}={_fmt(coef)}" for name, coef in pairs if coef != 0.0]
    if not terms:
        return ""
    return " " + keyword + " " + " ".join(terms)


def rc_ladder(n=100, n_params=2, r_ohm=1.0, c_farad=1e-12, jitter=0.05,
              seed=0):
    """Series RC ladder with n nodes (n unknowns), probed at the far end.

    Resistor i joins node i-1 to node i (node 0 is ground), a capacitor
    hangs off every node, and the single port injects at node n. Each
    parameter scales both the conductances and the capacitances inside
    its band of the chain.
    """
    if n < 1:
        raise ValueError("rc_ladder needs n >= 1")
    if n_params < 0:
        raise ValueError("n_params must be >= 0")
    rng = np.random.default_rng(seed)
    r_vals = r_ohm * _jitter_factors(rng, n, jitter)
    c_vals = c_farad * _jitter_factors(rng, n, jitter)

    out = [f"* bench rc_ladder n={n} n_params={n_params} seed={seed}"]
    if n_params:
        out.append(".param " + " ".join(f"p{j + 1}" for j in range(n_params)))
    for i in range(1, n + 1):
        t = (i - 0.5) / n
        g = 1.0 / r_vals[i - 1]
        c = c_vals[i - 1]
        gpairs = [(f"p{j + 1}", _band_weight(t, n_params, j) * g)
                  for j in range(n_params)]
        cpairs = [(f"p{j + 1}", _band_weight(t, n_params, j) * c)
                  for j in range(n_params)]
        out.append(f"R{i} {i - 1} {i} {_fmt(r_vals[i - 1])}"
                   + _sens_clause("SENSG", gpairs))
        out.append(f"C{i} {i} 0 {_fmt(c)}" + _sens_clause("SENSC", cpairs))
    out.append(f"P1 {n} 0")
    return "\n".join(out) + "\n"


def rc_mesh(rows=10, cols=10, n_params=2, r_ohm=1.0, c_farad=1e-12,
            jitter=0.05, seed=0):
    """RC grid with rows*cols nodes, grounded through a corner driver.

    Nearest-neighbor resistors, a capacitor per node, a driver resistor
    from node 0_0 to ground and the port at the opposite corner.
    Parameter bands run along the column (x) direction.
    """
    if rows < 2 or cols < 2:
        raise ValueError("rc_mesh needs rows >= 2 and cols >= 2")
    rng = np.random.default_rng(seed)

    def node(i, j):
        return f"{i}_{j}"

    out = [f"* bench rc_mesh rows={rows} cols={cols} n_params={n_params} "
           f"seed={seed}"]
    if n_params:
        out.append(".param " + " ".join(f"p{j + 1}" for j in range(n_params)))
    out.append(f"Rdrv {node(0, 0)} 0 {_fmt(r_ohm)}")
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                t = (j + 1.0) / cols
                r = r_ohm * (1.0 + jitter * (2.0 * rng.random() - 1.0))
                gpairs = [(f"p{q + 1}", _band_weight(t, n_params, q) / r)
                          for q in range(n_params)]
                out.append(f"Rh{i}_{j} {node(i, j)} {node(i, j + 1)} "
                           f"{_fmt(r)}" + _sens_clause("SENSG", gpairs))
            if i + 1 < rows:
                t = (j + 0.5) / cols
                r = r_ohm * (1.0 + jitter * (2.0 * rng.random() - 1.0))
                gpairs = [(f"p{q + 1}", _band_weight(t, n_params, q) / r)
                          for q in range(n_params)]
                out.append(f"Rv{i}_{j} {node(i, j)} {node(i + 1, j)} "
                           f"{_fmt(r)}" + _sens_clause("SENSG", gpairs))
    for i in range(rows):
        for j in range(cols):
            t = (j + 0.5) / cols
            c = c_farad * (1.0 + jitter * (2.0 * rng.random() - 1.0))
            cpairs = [(f"p{q + 1}", _band_weight(t, n_params, q) * c)
                      for q in range(n_params)]
            out.append(f"C{i}_{j} {node(i, j)} 0 {_fmt(c)}"
                       + _sens_clause("SENSC", cpairs))
    out.append(f"P1 {node(rows - 1, cols - 1)} 0")
    return "\n".join(out) + "\n"


def rc_tree(depth=5, fanout=3, n_params=3, r_ohm=10.0, c_farad=1e-13,
            jitter=0.05, seed=0):
    """Balanced RC tree driven at the root.

    Node count is (fanout^(depth+1) - 1) / (fanout - 1) for fanout > 1
    (depth + 1 for a unary chain). A driver resistor ties the root to
    ground; every tree edge is a resistor and every node carries a
    capacitor. Tree levels are split into n_params contiguous groups
    and each parameter scales the conductances and capacitances of its
    group of levels.
    """
    if depth < 1 or fanout < 1:
        raise ValueError("rc_tree needs depth >= 1 and fanout >= 1")
    if n_params < 0 or n_params > depth + 1:
        raise ValueError("n_params must lie in [0, depth + 1]")
    rng = np.random.default_rng(seed)

    def group(level):
        if not n_params:
            return None
        return min(n_params - 1, level * n_params // (depth + 1))

    out = [f"* bench rc_tree depth={depth} fanout={fanout} "
           f"n_params={n_params} seed={seed}"]
    if n_params:
        out.append(".param " + " ".join(f"p{j + 1}" for j in range(n_params)))
    out.append(f"Rdrv 0 1 {_fmt(r_ohm)}")
    # BFS order: node v (1-based) at level floor(log_f(...)) has children
    # fanout*(v-1)+2 .. fanout*(v-1)+fanout+1.
    level_of = {1: 0}
    frontier = [1]
    next_index = 2
    for level in range(1, depth + 1):
        new_frontier = []
        for parent in frontier:
            for _ in range(fanout):
                child = next_index
                next_index += 1
                level_of[child] = level
                new_frontier.append(child)
                r = r_ohm * (1.0 + jitter * (2.0 * rng.random() - 1.0))
                pairs = []
                g_idx = group(level)
                if g_idx is not None:
                    pairs = [(f"p{g_idx + 1}", 1.0 / r)]
                out.append(f"R{child} {parent} {child} {_fmt(r)}"
                           + _sens_clause("SENSG", pairs))
        frontier = new_frontier
    for v in sorted(level_of):
        c = c_farad * (1.0 + jitter * (2.0 * rng.random() - 1.0))
        pairs = []
        g_idx = group(level_of[v])
        if g_idx is not None:
            pairs = [(f"p{g_idx + 1}", c)]
        out.append(f"C{v} {v} 0 {_fmt(c)}" + _sens_clause("SENSC", pairs))
    out.append("P1 1 0")
    return "\n".join(out) + "\n"


def coupled_rlc_bus(lines=2, segments=30, n_params=2, k_c=0.3, r_ohm=0.5,
                    l_henry=2e-9, c_farad=4e-13, r_drive=50.0, r_load=50.0,
                    jitter=0.05, seed=0):
    """Inductively coupled multi-line RLC bus, four ports for two lines.

    Each line is a chain of series R-L segments with a shunt capacitor
    per segment, a driver resistor at the near end and a termination at
    the far end; unknown count is lines * (3 * segments + 1). Adjacent
    lines couple segment by segment through mutual inductances
    M = k_c * sqrt(L_a L_b). Ports sit at every line's near and far
    ends. Parameters are shared by all lines (the lines are drawn with
    the same process geometry): "pw" scales conductance and capacitance
    (width proxy), "pl" scales the self-inductances, both under a
    smooth full-length profile. n_params in {0, 1, 2} selects none,
    pw only, or both.
    """
    if lines < 1 or segments < 1:
        raise ValueError("coupled_rlc_bus needs lines >= 1, segments >= 1")
    if n_params not in (0, 1, 2):
        raise ValueError("coupled_rlc_bus supports n_params in {0, 1, 2}")
    if not 0.0 <= k_c < 1.0:
        raise ValueError("k_c must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    r_vals = r_ohm * _jitter_factors(rng, (lines, segments), jitter)
    l_vals = l_henry * _jitter_factors(rng, (lines, segments), jitter)
    c_vals = c_farad * _jitter_factors(rng, (lines, segments), jitter)

    out = [f"* bench coupled_rlc_bus lines={lines} segments={segments} "
           f"n_params={n_params} k_c={_fmt(k_c)} seed={seed}"]
    names = ["pw", "pl"][:n_params]
    if names:
        out.append(".param " + " ".join(names))

    def node(ell, s):
        return f"l{ell}n{s}"

    def mid(ell, s):
        return f"l{ell}m{s}"

    for ell in range(1, lines + 1):
        out.append(f"Rd{ell} {node(ell, 0)} 0 {_fmt(r_drive)}")
        for s in range(1, segments + 1):
            w = math.sin(math.pi * (s - 0.5) / segments) ** 2
            r = r_vals[ell - 1, s - 1]
            lv = l_vals[ell - 1, s - 1]
            c = c_vals[ell - 1, s - 1]
            gpairs = [("pw", w / r)] if n_params >= 1 else []
            cpairs = [("pw", w * c)] if n_params >= 1 else []
            lpairs = [("pl", w * lv)] if n_params >= 2 else []
            out.append(
                f"R{ell}_{s} {node(ell, s - 1)} {mid(ell, s)} {_fmt(r)}"
                + _sens_clause("SENSG", gpairs))
            out.append(
                f"L{ell}_{s} {mid(ell, s)} {node(ell, s)} {_fmt(lv)}"
                + _sens_clause("SENSL", lpairs))
            out.append(
                f"C{ell}_{s} {node(ell, s)} 0 {_fmt(c)}"
                + _sens_clause("SENSC", cpairs))
        out.append(f"Rt{ell} {node(ell, segments)} 0 {_fmt(r_load)}")
    for ell in range(1, lines if k_c else 1):
        for s in range(1, segments + 1):
            m = k_c * math.sqrt(l_vals[ell - 1, s - 1] * l_vals[ell, s - 1])
            out.append(f"K{ell}_{s} L{ell}_{s} L{ell + 1}_{s} {_fmt(m)}")
    port = 1
    for ell in range(1, lines + 1):
        out.append(f"P{port} {node(ell, 0)} 0")
        out.append(f"P{port + 1} {node(ell, segments)} 0")
        port += 2
    return "\n".join(out) + "\n"


_BENCHES = {
    "rc_ladder": rc_ladder,
    "rc_mesh": rc_mesh,
    "rc_tree": rc_tree,
    "coupled_rlc_bus": coupled_rlc_bus,
}

BENCH_NAMES = tuple(sorted(_BENCHES))


def gen_bench(name, **kwargs) -> str:
    """Generate a named benchmark netlist; see the generator docstrings."""
    try:
        generator = _BENCHES[name]
    except KeyError:
        raise ValueError(
            f"unknown bench {name!r}; available: {', '.join(BENCH_NAMES)}"
        ) from None
    return generator(**kwargs)
