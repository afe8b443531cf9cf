"""Extended SPICE-subset netlist front-end: parsing and MNA stamping.

Grammar (line oriented, case-insensitive keywords, ``*`` or ``#`` start
a comment line):

    .param <name> [<name> ...]
    P<id> <node+> <node->                       current-injection port
    R<id> <n1> <n2> <ohms>    [SENSG p=coef ...]
    C<id> <n1> <n2> <farads>  [SENSC p=coef ...]
    L<id> <n1> <n2> <henries> [SENSL p=coef ...]
    K<id> <La> <Lb> <mutual-henries>

Node ``0`` is ground. Values accept engineering suffixes
(k, meg, m, u, n, p, f). Sensitivity coefficients are linear
coefficients in SI units of the *stamped* quantity -- conductance for
resistors, capacitance for capacitors, inductance for inductors -- so
the assembled matrices are exactly affine in the parameters:

    G(p) = G0 + sum_i p_i * Gi,    C(p) = C0 + sum_i p_i * Ci.

The bare keyword ``SENS`` is a synonym for the element-appropriate
kind. ``SENSR`` is rejected: a resistance-linear coefficient would
make the conductance matrix non-affine in p.

Voltage sources are not supported; ports inject currents and are read
as voltages, which keeps B = L.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import scipy.sparse as sp

from parmor.sysmodel import ParametricSystem

__all__ = [
    "NetlistError",
    "Element",
    "Port",
    "MutualCoupling",
    "NetlistAst",
    "parse_netlist",
    "stamp_mna",
    "floating_node_names",
]

GROUND = "0"

_SUFFIXES = {
    "meg": 1e6,
    "k": 1e3,
    "m": 1e-3,
    "u": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
    "f": 1e-15,
}

_VALUE_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[kmunpf])?$",
    re.IGNORECASE,
)

# SENS keyword -> element kind it is valid on (None = generic synonym).
_SENS_KINDS = {"SENS": None, "SENSG": "R", "SENSC": "C", "SENSL": "L"}


class NetlistError(ValueError):
    """Parse or validation failure, carrying the 1-based source line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Element:
    """One two-terminal R/C/L element with its sensitivity map."""

    kind: str                       # "R" | "C" | "L"
    name: str
    nodes: tuple[str, str]
    value: float
    sens: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Port:
    name: str
    nodes: tuple[str, str]


@dataclass(frozen=True)
class MutualCoupling:
    name: str
    first: str                      # inductor element names
    second: str
    mutual: float                   # henries


@dataclass(frozen=True)
class NetlistAst:
    elements: tuple[Element, ...]
    ports: tuple[Port, ...]
    couplings: tuple[MutualCoupling, ...]
    params: tuple[str, ...]
    node_order: tuple[str, ...]     # first-appearance order, ground excluded


def parse_value(token, line=None):
    """Parse ``4.7k`` / ``1meg`` / ``2.2e-12`` into a float."""
    match = _VALUE_RE.match(token)
    if not match:
        raise NetlistError(f"malformed value {token!r}", line)
    base = float(match.group(1))
    suffix = match.group(2)
    return base * _SUFFIXES[suffix.lower()] if suffix else base


def _parse_sens(tokens, kind, params, line):
    """Parse the trailing ``SENSx p=coef ...`` groups of an element card."""
    sens = {}
    mode = None
    for token in tokens:
        upper = token.upper()
        if upper == "SENSR":
            raise NetlistError(
                "SENSR is not supported; declare a conductance coefficient "
                "with SENSG instead", line)
        if upper in _SENS_KINDS:
            expected = _SENS_KINDS[upper]
            if expected is not None and expected != kind:
                raise NetlistError(
                    f"{upper} is not valid on a {kind} element", line)
            mode = upper
            continue
        if "=" in token:
            if mode is None:
                raise NetlistError(
                    f"sensitivity pair {token!r} before any SENS keyword", line)
            name, _, raw = token.partition("=")
            if name not in params:
                raise NetlistError(f"unknown parameter {name!r} in sensitivity",
                                   line)
            if name in sens:
                raise NetlistError(f"duplicate sensitivity for {name!r}", line)
            sens[name] = parse_value(raw, line)
            continue
        raise NetlistError(f"unexpected token {token!r}", line)
    return sens


def parse_netlist(text) -> NetlistAst:
    """Parse netlist source into an AST; raises NetlistError with line info."""
    elements = []
    ports = []
    couplings = []
    params = []
    seen_names = set()
    node_order = []
    seen_nodes = set()

    def note_nodes(nodes):
        for node in nodes:
            if node != GROUND and node not in seen_nodes:
                seen_nodes.add(node)
                node_order.append(node)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "*#":
            continue
        tokens = line.split()
        head = tokens[0]
        upper = head.upper()

        if upper.startswith(".PARAM"):
            if len(tokens) < 2:
                raise NetlistError(".param needs at least one name", lineno)
            for name in tokens[1:]:
                if name in params:
                    raise NetlistError(f"duplicate parameter {name!r}", lineno)
                params.append(name)
            continue

        if upper[0] == "P":
            if len(tokens) != 3:
                raise NetlistError(f"port {head!r} needs exactly two nodes",
                                   lineno)
            if head in seen_names:
                raise NetlistError(f"duplicate name {head!r}", lineno)
            seen_names.add(head)
            nodes = (tokens[1], tokens[2])
            note_nodes(nodes)
            ports.append(Port(name=head, nodes=nodes))
            continue

        if upper[0] in "RCL":
            kind = upper[0]
            if len(tokens) < 4:
                raise NetlistError(
                    f"{kind} element {head!r} needs two nodes and a value",
                    lineno)
            if head in seen_names:
                raise NetlistError(f"duplicate name {head!r}", lineno)
            seen_names.add(head)
            nodes = (tokens[1], tokens[2])
            if nodes[0] == nodes[1]:
                raise NetlistError(f"element {head!r} shorts node {nodes[0]!r} "
                                   "to itself", lineno)
            value = parse_value(tokens[3], lineno)
            if kind in "RL" and value <= 0.0:
                raise NetlistError(
                    f"{head!r}: {kind} value must be positive, got {value}",
                    lineno)
            if kind == "C" and value < 0.0:
                raise NetlistError(
                    f"{head!r}: C value must be non-negative, got {value}",
                    lineno)
            sens = _parse_sens(tokens[4:], kind, params, lineno)
            note_nodes(nodes)
            elements.append(Element(kind=kind, name=head, nodes=nodes,
                                    value=value, sens=sens))
            continue

        if upper[0] == "K":
            if len(tokens) != 4:
                raise NetlistError(
                    f"coupling {head!r} needs two inductor names and a value",
                    lineno)
            if head in seen_names:
                raise NetlistError(f"duplicate name {head!r}", lineno)
            seen_names.add(head)
            mutual = parse_value(tokens[3], lineno)
            couplings.append(MutualCoupling(name=head, first=tokens[1],
                                            second=tokens[2], mutual=mutual))
            continue

        raise NetlistError(f"unrecognized card {head!r}", lineno)

    inductors = {e.name for e in elements if e.kind == "L"}
    for coupling in couplings:
        for ref in (coupling.first, coupling.second):
            if ref not in inductors:
                raise NetlistError(
                    f"coupling {coupling.name!r} references unknown inductor "
                    f"{ref!r}")
        if coupling.first == coupling.second:
            raise NetlistError(
                f"coupling {coupling.name!r} couples {coupling.first!r} with "
                "itself")

    return NetlistAst(
        elements=tuple(elements),
        ports=tuple(ports),
        couplings=tuple(couplings),
        params=tuple(params),
        node_order=tuple(node_order),
    )


class _Stamper:
    """COO accumulator for one symmetric-stencil matrix family."""

    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, i, j, value):
        if i < 0 or j < 0:
            return
        self.rows.append(i)
        self.cols.append(j)
        self.vals.append(value)

    def pair(self, i, j, value):
        # Two-terminal stencil; ground index -1 rows/cols are dropped.
        self.add(i, i, value)
        self.add(j, j, value)
        self.add(i, j, -value)
        self.add(j, i, -value)

    def build(self, n):
        return sp.coo_matrix(
            (self.vals, (self.rows, self.cols)), shape=(n, n)
        ).tocsc()


def stamp_mna(ast: NetlistAst) -> ParametricSystem:
    """Assemble the affine MNA matrices from a parsed netlist.

    Unknowns are node voltages in first-appearance order followed by
    inductor branch currents in declaration order. Ports stamp +-1
    columns into B and identically into L.
    """
    if not ast.ports:
        raise NetlistError("netlist declares no ports")
    node_index = {name: i for i, name in enumerate(ast.node_order)}
    node_index[GROUND] = -1
    n_nodes = len(ast.node_order)
    branch_names = tuple(e.name for e in ast.elements if e.kind == "L")
    branch_index = {name: n_nodes + j for j, name in enumerate(branch_names)}
    n = n_nodes + len(branch_names)

    g0 = _Stamper()
    c0 = _Stamper()
    gp = {name: _Stamper() for name in ast.params}
    cp = {name: _Stamper() for name in ast.params}

    for elem in ast.elements:
        i = node_index[elem.nodes[0]]
        j = node_index[elem.nodes[1]]
        if elem.kind == "R":
            g0.pair(i, j, 1.0 / elem.value)
            for pname, coef in elem.sens.items():
                gp[pname].pair(i, j, coef)
        elif elem.kind == "C":
            c0.pair(i, j, elem.value)
            for pname, coef in elem.sens.items():
                cp[pname].pair(i, j, coef)
        else:  # L: branch current unknown, incidence in G, value in C
            b = branch_index[elem.name]
            g0.add(i, b, 1.0)
            g0.add(j, b, -1.0)
            g0.add(b, i, -1.0)
            g0.add(b, j, 1.0)
            c0.add(b, b, elem.value)
            for pname, coef in elem.sens.items():
                cp[pname].add(b, b, coef)

    for coupling in ast.couplings:
        a = branch_index[coupling.first]
        b = branch_index[coupling.second]
        c0.add(a, b, coupling.mutual)
        c0.add(b, a, coupling.mutual)

    b_mat = _Stamper()
    for col, port in enumerate(ast.ports):
        i = node_index[port.nodes[0]]
        j = node_index[port.nodes[1]]
        if i >= 0:
            b_mat.add(i, col, 1.0)
        if j >= 0:
            b_mat.add(j, col, -1.0)

    b = sp.coo_matrix(
        (b_mat.vals, (b_mat.rows, b_mat.cols)), shape=(n, len(ast.ports))
    ).tocsc()

    sens = tuple(
        (gp[name].build(n), cp[name].build(n)) for name in ast.params
    )
    return ParametricSystem(
        g0=g0.build(n),
        c0=c0.build(n),
        sens=sens,
        b=b,
        l=b.copy(),
        node_names=ast.node_order,
        branch_names=branch_names,
        param_names=ast.params,
        port_names=tuple(p.name for p in ast.ports),
    )


def floating_node_names(ast: NetlistAst):
    """Nodes with no DC path to ground through R or L elements.

    Used to enrich singular-factorization errors: a floating subnetwork
    makes G0 structurally singular.
    """
    adjacency = {}
    for elem in ast.elements:
        if elem.kind == "C":
            continue
        a, b = elem.nodes
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)
    reached = set()
    stack = [GROUND]
    while stack:
        node = stack.pop()
        if node in reached:
            continue
        reached.add(node)
        stack.extend(adjacency.get(node, ()))
    return tuple(name for name in ast.node_order if name not in reached)
