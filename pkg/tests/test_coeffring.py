import cmath

import numpy as np
import pytest


def test_lp_add():
    from qlax.coeffring import Q, U, alpha, beta, lp_add

    assert lp_add(U, -U).is_zero()
    assert lp_add(U - U ** -1, U ** -1) == U

    expected = (Q + 1) * U - (Q ** -1 + 1) * U ** -1
    assert lp_add(alpha(U), beta(U)) == expected


def test_lp_mul():
    from qlax.coeffring import LaurentPoly, U, gamma, lp_mul

    assert lp_mul(U - U ** -1, U + U ** -1) == U ** 2 - U ** -2
    p = 3 * U ** 2 - 2j * LaurentPoly.var("theta", -1)
    assert lp_mul(LaurentPoly.const(1), p) == p

    g2 = lp_mul(gamma(), gamma())
    assert g2 == LaurentPoly.var("q", 2) - 2 + LaurentPoly.var("q", -2)


def test_lp_eval():
    from qlax.coeffring import U, alpha, beta, lp_eval

    assert lp_eval(beta(U), {"u": 1.0}) == 0
    q = cmath.exp(0.7j)
    assert np.isclose(lp_eval(alpha(U), {"u": 1.0, "q": q}), 2j * np.sin(0.7))
    assert lp_eval(U ** 2, {"u": 2}) == 4


def test_lp_eval_errors():
    from qlax.coeffring import U, W, lp_eval
    from qlax.exceptions import UnassignedVariable, UnknownVariable, ZeroBase

    with pytest.raises(UnassignedVariable):
        lp_eval(U * W, {"u": 1.0})

    with pytest.raises(ZeroBase):
        lp_eval(U ** -1, {"u": 0})

    # zero is fine under positive powers
    assert lp_eval(U ** 3, {"u": 0}) == 0

    with pytest.raises(UnknownVariable):
        lp_eval(U, {"u": 1.0, "lam": 2.0})


def test_lp_substitute():
    from qlax.coeffring import Q, U, alpha, lp_substitute

    assert lp_substitute(U - U ** -1, "u", U ** -1) == U ** -1 - U

    crossing = Q ** -1 * U ** -1
    assert lp_substitute(U, "u", crossing) == crossing
    assert lp_substitute(alpha(U), "u", crossing) == U ** -1 - Q ** -2 * U


def test_lp_substitute_rejects_sums():
    from qlax.coeffring import U, lp_substitute
    from qlax.exceptions import NonMonomialReplacement

    with pytest.raises(NonMonomialReplacement):
        lp_substitute(U ** 2, "u", U + 1)


def test_rejections_are_logged(caplog):
    import logging

    from qlax.coeffring import U, W, lp_eval, lp_substitute
    from qlax.exceptions import NonMonomialReplacement, UnassignedVariable, ZeroBase

    with caplog.at_level(logging.DEBUG, logger="qlax.coeffring"):
        with pytest.raises(UnassignedVariable):
            lp_eval(U * W, {"u": 1.0})
        with pytest.raises(ZeroBase):
            lp_eval(U ** -2, {"u": 0})
        with pytest.raises(NonMonomialReplacement):
            lp_substitute(U, "u", U + W)

    assert "'w' missing from ['u']" in caplog.text
    assert "'u' = 0 with exponent -2" in caplog.text
    assert "has 2 terms" in caplog.text


def test_unknown_variable():
    from qlax.coeffring import LaurentPoly
    from qlax.exceptions import UnknownVariable

    with pytest.raises(UnknownVariable):
        LaurentPoly.var("x")


def _random_poly(rng):
    from qlax.coeffring import LaurentPoly, Monomial

    terms = {}
    for _ in range(rng.integers(1, 5)):
        m = Monomial(tuple(int(k) for k in rng.integers(-3, 4, size=4)))
        terms[m] = complex(rng.normal(), rng.normal())
    return LaurentPoly(terms)


def test_evaluation_homomorphism():
    from qlax.coeffring import VARIABLES, lp_eval, lp_mul

    rng = np.random.default_rng(1)
    for _ in range(500):
        p, r = _random_poly(rng), _random_poly(rng)
        point = {v: cmath.exp(1j * rng.uniform(0, 2 * np.pi)) for v in VARIABLES}
        lhs = lp_eval(lp_mul(p, r), point)
        rhs = lp_eval(p, point) * lp_eval(r, point)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_substitute_then_eval():
    from qlax.coeffring import VARIABLES, LaurentPoly, lp_eval, lp_substitute

    rng = np.random.default_rng(2)
    replacement = 0.5j * LaurentPoly.monomial(u=-1, q=-1)
    for _ in range(100):
        p = _random_poly(rng)
        point = {v: cmath.exp(1j * rng.uniform(0, 2 * np.pi)) for v in VARIABLES}
        composed = dict(point)
        composed["u"] = lp_eval(replacement, point)
        lhs = lp_eval(lp_substitute(p, "u", replacement), point)
        rhs = lp_eval(p, composed)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_normalization():
    from qlax.coeffring import LaurentPoly, Monomial

    p = LaurentPoly({Monomial.of(u=1): 1e-16, Monomial.of(q=2): 2.0})
    assert len(p) == 1
    assert LaurentPoly(p.terms) == p


def test_str_is_deterministic():
    from qlax.coeffring import Q, gamma

    assert str(gamma()) == "q-q^-1"
    assert str(2 * Q ** 2 - 1) == "2*q^2-1"
