"""Exact multivariate Laurent polynomials with complex coefficients.

The ring is fixed to the four variables the lattice constructions need: the
spectral parameters ``u = e^λ`` and ``w = e^μ``, the deformation ``q`` (with the
anisotropy convention ``q = e^{iμ}``) and the Darboux parameter ``theta = e^Θ``.

Values are immutable; every operation returns a new, normalized polynomial.
"""
import logging
import math
from dataclasses import dataclass
from numbers import Number
from typing import Dict, Iterable, Iterator, Mapping, Optional, Tuple, Union

from qlax.exceptions import (
    CoeffRingError,
    NonMonomialReplacement,
    UnassignedVariable,
    UnknownVariable,
    ZeroBase,
)

logger = logging.getLogger(__name__)

VARIABLES: Tuple[str, ...] = ("u", "w", "q", "theta")
ZERO_THRESHOLD = 1e-15

_INDEX = {name: i for i, name in enumerate(VARIABLES)}


@dataclass(frozen=True, order=True)
class Monomial:
    """A product of variable powers, stored as one exponent per ring variable.

    Absent variables carry exponent 0, so the exponent vector is the canonical
    (and hashable) representation.
    """

    powers: Tuple[int, int, int, int] = (0, 0, 0, 0)

    @classmethod
    def of(cls, **exponents: int) -> "Monomial":
        powers = [0] * len(VARIABLES)
        for name, exponent in exponents.items():
            if name not in _INDEX:
                raise UnknownVariable(f"'{name}' is not one of {VARIABLES}")
            powers[_INDEX[name]] += int(exponent)
        return cls(tuple(powers))

    @property
    def exponents(self) -> Dict[str, int]:
        return {name: p for name, p in zip(VARIABLES, self.powers) if p != 0}

    def degree(self, variable: str) -> int:
        return self.powers[_index(variable)]

    def without(self, variable: str) -> "Monomial":
        powers = list(self.powers)
        powers[_index(variable)] = 0
        return Monomial(tuple(powers))

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(tuple(a + b for a, b in zip(self.powers, other.powers)))

    def __pow__(self, k: int) -> "Monomial":
        return Monomial(tuple(k * a for a in self.powers))

    def is_one(self) -> bool:
        return not any(self.powers)

    def __str__(self) -> str:
        if self.is_one():
            return "1"
        parts = []
        for name, p in zip(VARIABLES, self.powers):
            if p == 1:
                parts.append(name)
            elif p != 0:
                parts.append(f"{name}^{p}")
        return "*".join(parts)


ONE_MONOMIAL = Monomial()

Scalar = Union[int, float, complex]


class LaurentPoly:
    """A finite sum of complex coefficients times monomials.

    Construct with a mapping from :class:`Monomial` to coefficient, or use the
    :meth:`var` and :meth:`const` helpers and ordinary arithmetic::

        u, q = LaurentPoly.var("u"), LaurentPoly.var("q")
        alpha = q * u - q ** -1 * u ** -1
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Optional[Mapping[Monomial, Scalar]] = None):
        self._terms: Dict[Monomial, complex] = _normalize(terms or {})
        self._hash = None

    @classmethod
    def var(cls, name: str, exponent: int = 1) -> "LaurentPoly":
        return cls({Monomial.of(**{name: exponent}): 1.0})

    @classmethod
    def const(cls, value: Scalar) -> "LaurentPoly":
        return cls({ONE_MONOMIAL: value})

    @classmethod
    def monomial(cls, coefficient: Scalar = 1.0, **exponents: int) -> "LaurentPoly":
        return cls({Monomial.of(**exponents): coefficient})

    @property
    def terms(self) -> Mapping[Monomial, complex]:
        return dict(self._terms)

    def items(self) -> Iterator[Tuple[Monomial, complex]]:
        return iter(sorted(self._terms.items(), reverse=True))

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def is_constant(self) -> bool:
        return all(m.is_one() for m in self._terms)

    def constant_value(self) -> complex:
        return self._terms.get(ONE_MONOMIAL, 0j)

    def variables(self) -> Tuple[str, ...]:
        used = set()
        for m in self._terms:
            used.update(m.exponents)
        return tuple(name for name in VARIABLES if name in used)

    def degrees(self, variable: str) -> Tuple[int, ...]:
        return tuple(sorted({m.degree(variable) for m in self._terms}))

    def coefficient(self, variable: str, k: int) -> "LaurentPoly":
        """The polynomial multiplying ``variable**k``, with ``variable`` removed."""
        return LaurentPoly(
            {m.without(variable): c for m, c in self._terms.items() if m.degree(variable) == k}
        )

    def monomial_inverse(self) -> "LaurentPoly":
        if not self.is_monomial():
            raise CoeffRingError(f"{self} is not invertible in the Laurent ring")
        ((m, c),) = self._terms.items()
        return LaurentPoly({m ** -1: 1.0 / c})

    def conjugate_variable(self, variable: str) -> "LaurentPoly":
        """Reflect one variable, ``x -> x^-1``."""
        return lp_substitute(self, variable, LaurentPoly.var(variable, -1))

    def __add__(self, other) -> "LaurentPoly":
        return lp_add(self, _coerce(other))

    __radd__ = __add__

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "LaurentPoly":
        return lp_add(self, -_coerce(other))

    def __rsub__(self, other) -> "LaurentPoly":
        return lp_add(_coerce(other), -self)

    def __mul__(self, other) -> "LaurentPoly":
        if isinstance(other, Number):
            return LaurentPoly({m: c * other for m, c in self._terms.items()})
        return lp_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "LaurentPoly":
        return self * (1.0 / other)

    def __pow__(self, k: int) -> "LaurentPoly":
        if k < 0:
            return self.monomial_inverse() ** (-k)
        result = LaurentPoly.const(1.0)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, Number):
            other = LaurentPoly.const(other)
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        return self._terms == other._terms

    def isclose(self, other: "LaurentPoly", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for _, c in diff.items())

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __call__(self, **assignment: Scalar) -> complex:
        return lp_eval(self, assignment)

    def __repr__(self) -> str:
        return f"LaurentPoly({self})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        out = ""
        for m, c in self.items():
            if m.is_one():
                piece = format_number(c)
            elif _close(c, 1.0):
                piece = str(m)
            elif _close(c, -1.0):
                piece = "-" + str(m)
            else:
                piece = f"{format_number(c)}*{m}"
            if out and not piece.startswith("-"):
                out += "+"
            out += piece
        return out


def _index(variable: str) -> int:
    try:
        return _INDEX[variable]
    except KeyError:
        raise UnknownVariable(f"'{variable}' is not one of {VARIABLES}") from None


def _close(c: complex, target: float) -> bool:
    return abs(c - target) <= 1e-14


def _coerce(value) -> LaurentPoly:
    if isinstance(value, LaurentPoly):
        return value
    if isinstance(value, Number):
        return LaurentPoly.const(value)
    raise TypeError(f"cannot use {type(value).__name__} as a Laurent polynomial")


def _normalize(terms: Mapping[Monomial, Scalar]) -> Dict[Monomial, complex]:
    out = {}
    for m, c in terms.items():
        if not isinstance(m, Monomial):
            raise TypeError(f"expected Monomial keys, got {type(m).__name__}")
        c = complex(c)
        if abs(c) > ZERO_THRESHOLD:
            out[m] = c
    return out


def format_number(c: complex) -> str:
    """Deterministic text for a coefficient: integers stay integers."""
    c = complex(c)
    if abs(c.imag) <= ZERO_THRESHOLD:
        r = c.real
        if abs(r - round(r)) < 1e-12:
            return str(int(round(r)))
        return f"{r:.12g}"
    if abs(c.real) <= ZERO_THRESHOLD:
        return f"{c.imag:.12g}j"
    return f"({c.real:.12g}{c.imag:+.12g}j)"


def lp_add(p: LaurentPoly, r: LaurentPoly) -> LaurentPoly:
    """Coefficientwise sum."""
    terms = dict(p._terms)
    for m, c in r._terms.items():
        terms[m] = terms.get(m, 0j) + c
    return LaurentPoly(terms)


def lp_mul(p: LaurentPoly, r: LaurentPoly) -> LaurentPoly:
    """Product by convolution of the exponent vectors."""
    terms: Dict[Monomial, complex] = {}
    for m1, c1 in p._terms.items():
        for m2, c2 in r._terms.items():
            m = m1 * m2
            terms[m] = terms.get(m, 0j) + c1 * c2
    return LaurentPoly(terms)


def lp_eval(p: LaurentPoly, assignment: Mapping[str, Scalar]) -> complex:
    """Substitute complex values for every variable occurring in ``p``.

    Raises:
        UnassignedVariable: a variable of ``p`` has no value.
        ZeroBase: a variable carrying a negative exponent is assigned 0.
    """
    for name in assignment:
        _index(name)
    total = 0j
    for m, c in p._terms.items():
        value = c
        for name, exponent in m.exponents.items():
            if name not in assignment:
                logger.debug(f"lp_eval: '{name}' missing from {sorted(assignment)}")
                raise UnassignedVariable(f"no value for '{name}' in {p}")
            x = complex(assignment[name])
            if x == 0 and exponent < 0:
                logger.debug(f"lp_eval: '{name}' = 0 with exponent {exponent}")
                raise ZeroBase(f"'{name}' = 0 under a negative power in {p}")
            value *= x ** exponent
        total += value
    return total


def lp_substitute(p: LaurentPoly, variable: str, replacement: LaurentPoly) -> LaurentPoly:
    """Replace ``variable`` by a scalar multiple of a single monomial.

    Only monomial replacements keep negative powers inside the Laurent ring;
    this realizes the crossing substitutions such as ``u -> q^-1 u^-1``.

    Raises:
        NonMonomialReplacement: ``replacement`` has more (or fewer) than one term.
    """
    _index(variable)
    replacement = _coerce(replacement)
    if not replacement.is_monomial():
        logger.debug(f"lp_substitute: {variable} -> {replacement} has {len(replacement)} terms")
        raise NonMonomialReplacement(f"cannot substitute {variable} -> {replacement}")
    out = LaurentPoly()
    for m, c in p._terms.items():
        k = m.degree(variable)
        out = out + LaurentPoly({m.without(variable): c}) * replacement ** k
    return out


def lp_sum(polys: Iterable[LaurentPoly]) -> LaurentPoly:
    out = LaurentPoly()
    for p in polys:
        out = out + p
    return out


def to_bivariate(p: LaurentPoly, q: complex, theta: complex = 1.0) -> Dict[Tuple[int, int], complex]:
    """Collapse ``p`` onto its (u, w) powers with q and theta evaluated."""
    out: Dict[Tuple[int, int], complex] = {}
    for m, c in p._terms.items():
        value = c * complex(q) ** m.degree("q") * complex(theta) ** m.degree("theta")
        key = (m.degree("u"), m.degree("w"))
        out[key] = out.get(key, 0j) + value
    return {k: v for k, v in out.items() if abs(v) > ZERO_THRESHOLD}


# Frequently used scalars of the six-vertex R-matrix.
U = LaurentPoly.var("u")
W = LaurentPoly.var("w")
Q = LaurentPoly.var("q")
THETA = LaurentPoly.var("theta")


def alpha(x: LaurentPoly) -> LaurentPoly:
    """``q x - q^-1 x^-1``."""
    return Q * x - Q ** -1 * x.monomial_inverse()


def beta(x: LaurentPoly) -> LaurentPoly:
    """``x - x^-1``."""
    return x - x.monomial_inverse()


def gamma() -> LaurentPoly:
    """``q - q^-1``."""
    return Q - Q ** -1


def is_admissible_q(q: complex, cutoff: int) -> bool:
    """True when ``q^(2k) != 1`` (to 1e-8) for k = 1..cutoff and q is nonzero."""
    q = complex(q)
    if q == 0 or not math.isfinite(abs(q)):
        return False
    return all(abs(q ** (2 * k) - 1) > 1e-8 for k in range(1, cutoff + 1))
