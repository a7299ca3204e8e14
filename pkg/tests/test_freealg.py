from pathlib import Path

import numpy as np
import pytest

GOLDEN = Path(__file__).parent / "golden"


def _word(*specs):
    from qlax.freealg import GenSymbol, NCExpr

    return NCExpr.word(*(GenSymbol(*s) for s in specs))


def test_format_expr():
    from qlax.coeffring import Q
    from qlax.freealg import GenSymbol, NCExpr, format_expr

    e = NCExpr.word(GenSymbol("b_dag", 2), GenSymbol("b", 1), coefficient=Q - Q ** -1)
    assert format_expr(e) == "(q-q^-1) * bdag[2].b[1]"
    assert format_expr(_word(("b", -1, True)), base=0) == "b~[n-1]"
    assert format_expr(NCExpr()) == "0"


def test_gen_symbol_validation():
    from qlax.exceptions import UnsupportedSpecies
    from qlax.freealg import GenSymbol

    with pytest.raises(UnsupportedSpecies):
        GenSymbol("A", 0, True)

    with pytest.raises(UnsupportedSpecies):
        GenSymbol("c", 1)


def test_normal_order_rules():
    from qlax.coeffring import Q, gamma
    from qlax.freealg import NCExpr, normal_order

    # b b_dag -> b_dag b + (q - q^-1) v_inv^2
    e = normal_order(_word(("b", 1), ("b_dag", 1)))
    expected = _word(("b_dag", 1), ("b", 1)) + _word(("v_inv", 1), ("v_inv", 1)) * gamma()
    assert e.isclose(expected)

    assert normal_order(_word(("b", 1), ("v", 1))).isclose(_word(("v", 1), ("b", 1)) * Q ** -1)
    assert normal_order(_word(("v", 2), ("v_inv", 2))) == NCExpr.scalar(1.0)

    # different sites and sectors commute into (site, sector) order
    assert normal_order(_word(("b", 2), ("b_dag", 1))) == _word(("b_dag", 1), ("b", 2))
    assert normal_order(_word(("b", 1, True), ("b_dag", 1))) == _word(("b_dag", 1), ("b", 1, True))


def test_normal_order_b_b_bdag():
    from qlax.coeffring import Q
    from qlax.freealg import normal_order

    e = normal_order(_word(("b", 1), ("b", 1), ("b_dag", 1)))
    expected = _word(("b_dag", 1), ("b", 1), ("b", 1)) + _word(("v_inv", 1), ("v_inv", 1), ("b", 1)) * (
        Q ** 3 - Q ** -1
    )
    assert e.isclose(expected)


def test_normal_order_errors():
    from qlax.exceptions import RewriteLimitExceeded, UnsupportedSpecies
    from qlax.freealg import normal_order

    with pytest.raises(UnsupportedSpecies):
        normal_order(_word(("A", 0), ("b", 0)))

    with pytest.raises(RewriteLimitExceeded):
        normal_order(_word(("b", 1), ("b", 1), ("b_dag", 1), ("b_dag", 1)), max_steps=2)


def test_normal_order_is_idempotent():
    from qlax.freealg import GenSymbol, NCExpr, normal_order

    rng = np.random.default_rng(3)
    species = ["v", "v_inv", "b", "b_dag"]
    for _ in range(30):
        length = rng.integers(1, 6)
        word = [GenSymbol(species[rng.integers(4)], int(rng.integers(1, 3))) for _ in range(length)]
        once = normal_order(NCExpr.word(*word))
        assert normal_order(once) == once


def test_numeric_crosscheck():
    from qlax.fockspace import ChainSpec
    from qlax.freealg import GenSymbol, NCExpr, numeric_crosscheck

    spec = ChainSpec(N=2, D=7)
    rng = np.random.default_rng(0)
    species = ["v", "v_inv", "b", "b_dag"]
    for _ in range(25):
        length = rng.integers(1, 7)
        word = [
            GenSymbol(species[rng.integers(4)], int(rng.integers(1, 3)), bool(rng.integers(2)))
            for _ in range(length)
        ]
        assert numeric_crosscheck(NCExpr.word(*word), spec) < 1e-10


def test_substitute_word_and_shift():
    from qlax.coeffring import Q
    from qlax.freealg import GenSymbol, NCExpr

    A_inv = GenSymbol("A_inv", 0)
    e = _word(("b", 0, True), ("A_inv", 0), ("A_inv", 0))
    out = e.substitute_word((A_inv, A_inv), NCExpr.scalar(Q) + _word(("b_dag", 0)))
    assert out == _word(("b", 0, True)) * Q + _word(("b", 0, True), ("b_dag", 0))
    assert out.shifted(1) == _word(("b", 1, True)) * Q + _word(("b", 1, True), ("b_dag", 1))


def test_space_equations():
    from qlax.freealg import darboux_space_equations

    equations = darboux_space_equations()
    # the u^-2 entry of (2,2) repeats the u^2 entry of (1,1)
    assert len(equations) == 7
    assert "(2,2) u^-2" not in equations.labels()


def test_space_report():
    from qlax.freealg.backlund import Classification, space_report

    report = space_report()
    assert report["A[n+1].v[n] = v~[n].A[n]"].classification is Classification.EXACT
    assert report["X[n] = theta A[n].bdag[n]"].classification is Classification.EXACT
    assert report["Y[n] = theta^-1 (A[n].b[n] - b~[n].Ainv[n])"].classification is Classification.EXACT

    x_next = report["X[n+1] = theta^-1 (Ainv[n+1].bdag[n] - bdag~[n].A[n+1])"]
    assert x_next.classification is Classification.STRUCTURAL
    assert x_next.factor == "-q^-1"

    y_next = report["Y[n+1] = theta b~[n].A[n+1]"]
    assert y_next.classification is Classification.STRUCTURAL
    assert y_next.factor == "q"

    assert report.extra == ["(1,1) u^0", "(2,2) u^0"]
    assert not report.clean


def test_time_report_plus():
    from qlax.freealg.backlund import Branch, Classification, time_report

    report = time_report(Branch.PLUS)
    assert report["Xdot[n]"].classification is Classification.CORRECTED
    assert report["Ydot[n]"].classification is Classification.CORRECTED
    assert report["AinvDot[n]"].classification is Classification.EXACT
    assert report["X[n] = theta A[n].bdag[n]"].classification is Classification.EXACT

    a_dot = report["Adot[n]"]
    assert a_dot.classification is Classification.EXACT
    assert set(a_dot.produced) == {"(1,1) u^1", "(2,2) u^-1"}

    y_static = report["Y[n+1] = theta b~[n].A[n+1]"]
    assert y_static.classification is Classification.STRUCTURAL
    assert y_static.variant == "n -> n-1"
    assert y_static.factor == "q"

    assert report.consistent == ["(2,2) u^1"]
    assert report.extra == []


def test_time_report_minus():
    from qlax.freealg.backlund import Branch, Classification, time_report

    report = time_report("minus")
    assert report["Xdot[n]"].classification is Classification.EXACT
    assert report["Y[n] = theta^-1 (A[n].b[n] - b~[n].Ainv[n])"].classification is Classification.EXACT
    assert report["AinvDot[n]"].classification is Classification.CORRECTED

    for label, factor in [
        ("Ydot[n]", "q"),
        ("Adot[n]", "-q^-1"),
        ("X[n+1] = theta^-1 (Ainv[n+1].bdag[n] - bdag~[n].A[n+1])", "-q^-1"),
    ]:
        assert report[label].classification is Classification.STRUCTURAL, label
        assert report[label].factor == factor, label

    assert report.count(Classification.MISSING) == 0
    assert report.extra == []


def test_derive_casimir():
    from qlax.fockspace import ChainSpec
    from qlax.freealg import derive_casimir, numeric_crosscheck

    casimir = derive_casimir()
    assert casimir.matches
    assert numeric_crosscheck(casimir.rhs, ChainSpec(N=2, D=5), theta=1.3) < 1e-10


def test_derive_bti():
    from qlax.freealg import derive_bti
    from qlax.freealg.backlund import Classification

    bti = derive_bti()
    assert bti.line1.isclose(bti.printed1)
    assert bti.diff["line 1"].classification is Classification.EXACT

    line2 = bti.diff["line 2"]
    assert line2.classification is Classification.STRUCTURAL
    assert line2.factor == "q"
    assert len(bti.diff.differences) == 1
    difference = bti.diff.differences[0]
    assert (difference.word, difference.produced, difference.expected) == ("A[n].b[n].Ainv[n]", "-1", "-q^-1")


def test_backlund_report_logs(caplog):
    import logging

    from qlax.freealg import backlund_report

    with caplog.at_level(logging.INFO, logger="qlax.freealg.backlund"):
        report = backlund_report()
    assert len(report.unresolved) == 2
    assert "time plus" in caplog.text


@pytest.mark.parametrize("name", ["space.txt", "time_plus.txt", "time_minus.txt", "casimir.txt", "bti.txt"])
def test_golden(name):
    from qlax.freealg import golden_texts

    path = GOLDEN / name
    assert path.exists(), f"missing {path}; regenerate with `qlax bt --write-golden tests/golden`"
    assert golden_texts()[name] == path.read_text()
