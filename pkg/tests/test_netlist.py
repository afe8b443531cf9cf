"""Netlist grammar and MNA stamping tests."""

import numpy as np
import numpy.testing as npt
import pytest

from parmor.analysis import eval_transfer
from parmor.kernels import SingularMatrixError
from parmor.netlist import (
    NetlistError,
    floating_node_names,
    parse_netlist,
    stamp_mna,
)
from parmor.reducers import reduce_prima
from parmor.sysmodel import assemble_at


def dense(system):
    return (system.g0.toarray(), system.c0.toarray(), system.b.toarray(),
            system.l.toarray())


class TestParse:
    def test_minimal_deck(self):
        ast = parse_netlist("P1 1 0\nR1 1 0 1.0\nC1 1 0 1.0")
        assert len(ast.ports) == 1
        kinds = sorted(e.kind for e in ast.elements)
        assert kinds == ["C", "R"]
        assert ast.params == ()

    def test_comments_params_and_suffix(self):
        ast = parse_netlist(
            "* comment\n# also a comment\n.param p1 p2\n"
            "P1 1 0\nR1 1 2 1k SENS p1=100\nR2 2 0 1")
        assert ast.params == ("p1", "p2")
        r1 = next(e for e in ast.elements if e.name == "R1")
        assert r1.value == pytest.approx(1000.0)
        assert r1.sens == {"p1": 100.0}

    @pytest.mark.parametrize("token,value", [
        ("4.7k", 4.7e3), ("1meg", 1e6), ("1MEG", 1e6), ("3m", 3e-3),
        ("2u", 2e-6), ("5n", 5e-9), ("1p", 1e-12), ("10f", 10e-15),
        ("2.2e-12", 2.2e-12),
    ])
    def test_value_suffixes(self, token, value):
        ast = parse_netlist(f"P1 1 0\nR1 1 0 1\nC1 1 0 {token}")
        c1 = next(e for e in ast.elements if e.name == "C1")
        assert c1.value == pytest.approx(value, rel=1e-12)

    def test_case_insensitive_keywords(self):
        ast = parse_netlist(".PARAM p1\np1x 1 0\nr1 1 0 1 sensg p1=0.5")
        # element kind comes from the leading letter regardless of case
        assert ast.ports[0].name.upper() == "P1X"
        assert ast.elements[0].sens == {"p1": 0.5}

    def test_negative_resistance_rejected(self):
        with pytest.raises(NetlistError, match="positive"):
            parse_netlist("P1 1 0\nR1 1 0 -5")

    def test_zero_inductance_rejected(self):
        with pytest.raises(NetlistError, match="positive"):
            parse_netlist("P1 1 0\nR1 1 0 1\nL1 1 0 0")

    def test_negative_capacitance_rejected(self):
        with pytest.raises(NetlistError, match="C value"):
            parse_netlist("P1 1 0\nR1 1 0 1\nC1 1 0 -1p")

    def test_sensr_rejected(self):
        with pytest.raises(NetlistError, match="SENSG"):
            parse_netlist(".param p1\nP1 1 0\nR1 1 0 1 SENSR p1=0.1")

    def test_wrong_sens_kind_rejected(self):
        with pytest.raises(NetlistError, match="not valid"):
            parse_netlist(".param p1\nP1 1 0\nR1 1 0 1 SENSC p1=0.1")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(NetlistError, match="p9"):
            parse_netlist(".param p1\nP1 1 0\nR1 1 0 1 SENSG p9=0.1")

    def test_duplicate_name_rejected(self):
        with pytest.raises(NetlistError, match="duplicate"):
            parse_netlist("P1 1 0\nR1 1 0 1\nR1 1 0 2")

    def test_error_carries_line_number(self):
        with pytest.raises(NetlistError) as info:
            parse_netlist("P1 1 0\nR1 1 0 1\nR2 1 0 oops")
        assert info.value.line == 3
        assert "line 3" in str(info.value)

    def test_coupling_must_reference_inductors(self):
        with pytest.raises(NetlistError, match="unknown inductor"):
            parse_netlist("P1 1 0\nR1 1 0 1\nL1 1 0 1n\nK1 L1 L2 0.5n")

    def test_self_coupling_rejected(self):
        with pytest.raises(NetlistError, match="itself"):
            parse_netlist("P1 1 0\nR1 1 0 1\nL1 1 0 1n\nK1 L1 L1 0.5n")

    def test_unrecognized_card(self):
        with pytest.raises(NetlistError, match="unrecognized"):
            parse_netlist("P1 1 0\nQ1 1 0 2N2222")

    def test_parameter_order_is_declaration_order(self):
        ast = parse_netlist(".param beta alpha\nP1 1 0\nR1 1 0 1")
        assert ast.params == ("beta", "alpha")


class TestStamp:
    def test_single_node(self):
        system = stamp_mna(parse_netlist("P1 1 0\nR1 1 0 1.0\nC1 1 0 1.0"))
        g0, c0, b, ell = dense(system)
        npt.assert_allclose(g0, [[1.0]])
        npt.assert_allclose(c0, [[1.0]])
        npt.assert_allclose(b, [[1.0]])
        npt.assert_allclose(ell, [[1.0]])

    def test_two_node_stencil(self):
        system = stamp_mna(parse_netlist("P1 1 0\nR1 1 2 1\nC1 2 0 1"))
        g0, c0, b, _ = dense(system)
        npt.assert_allclose(g0, [[1.0, -1.0], [-1.0, 1.0]])
        npt.assert_allclose(c0, [[0.0, 0.0], [0.0, 1.0]])
        npt.assert_allclose(b, [[1.0], [0.0]])

    def test_sens_stencil_scaling(self):
        system = stamp_mna(parse_netlist(
            ".param p1\nP1 1 0\nR1 1 2 1 SENSG p1=0.1\nR2 2 0 1\nC1 2 0 1"))
        g1, c1 = (m.toarray() for m in system.sens[0])
        npt.assert_allclose(g1, [[0.1, -0.1], [-0.1, 0.1]], atol=1e-15)
        npt.assert_allclose(c1, np.zeros((2, 2)))

    def test_inductor_branch(self):
        # L between 1 and 2 adds one branch unknown: incidence in G,
        # inductance on the branch diagonal of the C matrix.
        system = stamp_mna(parse_netlist(
            "P1 1 0\nR1 1 0 1\nL1 1 2 2n\nR2 2 0 1\nC1 2 0 1p"))
        assert system.n == 3
        assert system.branch_names == ("L1",)
        g0, c0, _, _ = dense(system)
        npt.assert_allclose(g0[0, 2], 1.0)
        npt.assert_allclose(g0[1, 2], -1.0)
        npt.assert_allclose(g0[2, 0], -1.0)
        npt.assert_allclose(g0[2, 1], 1.0)
        npt.assert_allclose(c0[2, 2], 2e-9)
        assert system.unknown_names() == ("1", "2", "i(L1)")

    def test_mutual_coupling_stamp(self):
        system = stamp_mna(parse_netlist(
            "P1 1 0\nR1 1 0 1\nL1 1 0 4n\nL2 2 0 1n\nR2 2 0 1\nK1 L1 L2 1n"))
        _, c0, _, _ = dense(system)
        # branch rows are the last two unknowns, coupling is symmetric
        npt.assert_allclose(c0[2, 3], 1e-9)
        npt.assert_allclose(c0[3, 2], 1e-9)
        npt.assert_allclose(c0[2, 2], 4e-9)
        npt.assert_allclose(c0[3, 3], 1e-9)

    def test_b_equals_l(self):
        system = stamp_mna(parse_netlist(
            "P1 1 0\nP2 2 0\nR1 1 2 1\nR2 2 0 1\nC1 1 0 1p"))
        npt.assert_allclose(system.b.toarray(), system.l.toarray())
        assert system.m == 2

    def test_no_ports_rejected(self):
        with pytest.raises(NetlistError, match="port"):
            stamp_mna(parse_netlist("R1 1 0 1\nC1 1 0 1p"))

    def test_rc_matrices_symmetric_spsd(self):
        from parmor.bench import rc_mesh
        system = stamp_mna(parse_netlist(rc_mesh(rows=6, cols=7, seed=2)))
        assert system.n == 42
        g0, c0, _, _ = dense(system)
        npt.assert_allclose(g0, g0.T)
        npt.assert_allclose(c0, c0.T)
        assert np.linalg.eigvalsh(c0).min() >= -1e-12
        assert np.linalg.eigvalsh(g0).min() > 0

    def test_assembly_roundtrip_against_preshifted_deck(self):
        # stamping a deck with hand-shifted element values must equal
        # assemble_at of the sensitivity-annotated deck
        p1 = 0.4
        annotated = stamp_mna(parse_netlist(
            ".param p1\nP1 1 0\n"
            "R1 1 2 2 SENSG p1=0.25\nR2 2 0 1\n"
            "C1 2 0 1e-12 SENSC p1=2e-13"))
        shifted_r1 = 1.0 / (0.5 + p1 * 0.25)
        shifted = stamp_mna(parse_netlist(
            f"P1 1 0\nR1 1 2 {shifted_r1!r}\nR2 2 0 1\n"
            f"C1 2 0 {1e-12 + p1 * 2e-13!r}"))
        g, c, _, _ = assemble_at(annotated, [p1])
        npt.assert_allclose(g.toarray(), shifted.g0.toarray(), atol=1e-12)
        npt.assert_allclose(c.toarray(), shifted.c0.toarray(), atol=1e-25)

    def test_permutation_consistency(self):
        # renaming nodes permutes the unknowns but not the physics
        base = ("P1 a 0\nR1 a b 1\nR2 b c 2\nR3 c 0 1\n"
                "C1 a 0 1p\nC2 b 0 2p\nC3 c 0 1p")
        renamed = ("P1 x 0\nR3 z 0 1\nR2 y z 2\nR1 x y 1\n"
                   "C3 z 0 1p\nC1 x 0 1p\nC2 y 0 2p")
        sys_a = stamp_mna(parse_netlist(base))
        sys_b = stamp_mna(parse_netlist(renamed))
        for s in (0.0, 1e9j, 1e10j + 3e9):
            ha = eval_transfer(sys_a, [], s)
            hb = eval_transfer(sys_b, [], s)
            npt.assert_allclose(ha, hb, rtol=1e-12)


class TestFloatingDetection:
    deck = "P1 1 0\nR1 1 0 1\nC1 1 0 1p\nRa a b 2\nCa a 0 1p"

    def test_floating_node_names(self):
        assert floating_node_names(parse_netlist(self.deck)) == ("a", "b")

    def test_grounded_deck_has_none(self):
        ast = parse_netlist("P1 1 0\nR1 1 2 1\nR2 2 0 1\nC1 2 0 1p")
        assert floating_node_names(ast) == ()

    def test_factorization_reports_floating_set(self):
        system = stamp_mna(parse_netlist(self.deck))
        with pytest.raises(SingularMatrixError) as info:
            reduce_prima(system, 1)
        assert set(info.value.node_names) == {"a", "b"}
        assert "floating" in str(info.value)
