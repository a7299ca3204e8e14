"""Words and noncommutative expressions over the coeffring scalars.

A :class:`GenSymbol` is one generator: a field of the q-oscillator chain
(``v``, ``v_inv``, ``b``, ``b_dag``, plain or tilde) or an opaque entry of the
Darboux matrix (``A``, ``A_inv``, ``X``, ``Y`` and their time derivatives).
An :class:`NCExpr` maps words (tuples of symbols) to LaurentPoly coefficients;
the empty word is the unit.

Sites are plain integers. The Darboux derivations use sites relative to a
reference site ``n = 0``; :func:`format_expr` can print them as ``n-1``,
``n``, ``n+1``.
"""
import enum
from dataclasses import dataclass, field
from numbers import Number
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from qlax.coeffring import LaurentPoly
from qlax.exceptions import UnsupportedSpecies


class Species(str, enum.Enum):
    V = "v"
    V_INV = "v_inv"
    B = "b"
    B_DAG = "b_dag"
    A = "A"
    A_INV = "A_inv"
    X = "X"
    Y = "Y"
    X_DOT = "Xdot"
    Y_DOT = "Ydot"
    A_DOT = "Adot"
    A_INV_DOT = "AinvDot"


FIELD_SPECIES = frozenset({Species.V, Species.V_INV, Species.B, Species.B_DAG})

TEXT_NAMES = {
    Species.V: "v",
    Species.V_INV: "vinv",
    Species.B: "b",
    Species.B_DAG: "bdag",
    Species.A: "A",
    Species.A_INV: "Ainv",
    Species.X: "X",
    Species.Y: "Y",
    Species.X_DOT: "Xdot",
    Species.Y_DOT: "Ydot",
    Species.A_DOT: "Adot",
    Species.A_INV_DOT: "AinvDot",
}

_SPECIES_ORDER = {s: i for i, s in enumerate(Species)}


@dataclass(frozen=True)
class GenSymbol:
    species: Species
    site: int = 0
    tilde: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "species", Species(self.species))
        except ValueError:
            raise UnsupportedSpecies(f"unknown species '{self.species}'") from None
        if self.tilde and self.species not in FIELD_SPECIES:
            raise UnsupportedSpecies(f"{self.species.value} belongs to the Darboux matrix and has no tilde")

    @property
    def is_field(self) -> bool:
        return self.species in FIELD_SPECIES

    @property
    def sector(self) -> Tuple[int, bool]:
        return self.site, self.tilde

    def sort_key(self) -> Tuple[int, bool, int]:
        return self.site, self.tilde, _SPECIES_ORDER[self.species]

    def shifted(self, k: int) -> "GenSymbol":
        return GenSymbol(self.species, self.site + k, self.tilde)

    def label(self, base: Optional[int] = None) -> str:
        name = TEXT_NAMES[self.species] + ("~" if self.tilde else "")
        if base is None:
            return f"{name}[{self.site}]"
        offset = self.site - base
        site = "n" if offset == 0 else f"n{offset:+d}"
        return f"{name}[{site}]"

    def __str__(self) -> str:
        return self.label()


Word = Tuple[GenSymbol, ...]
Coefficient = Union[LaurentPoly, Number]


def word_key(word: Word):
    return len(word), tuple(s.sort_key() for s in word)


def _as_poly(c: Coefficient) -> LaurentPoly:
    return c if isinstance(c, LaurentPoly) else LaurentPoly.const(c)


class NCExpr:
    """A finite sum of coefficient * word in the free algebra.

    Products are concatenation of words; ``*`` is the noncommutative product
    when both operands are NCExpr and scalar multiplication otherwise. Put the
    expression on the left when scaling by a LaurentPoly (``e * p``) or wrap
    the scalar with :meth:`scalar`.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Optional[Mapping[Word, Coefficient]] = None):
        out: Dict[Word, LaurentPoly] = {}
        for word, c in (terms or {}).items():
            c = _as_poly(c)
            if not c.is_zero():
                out[tuple(word)] = c
        self._terms = out

    @classmethod
    def scalar(cls, c: Coefficient = 1.0) -> "NCExpr":
        return cls({(): c})

    @classmethod
    def word(cls, *symbols: GenSymbol, coefficient: Coefficient = 1.0) -> "NCExpr":
        return cls({tuple(symbols): coefficient})

    @classmethod
    def symbol(cls, species, site: int = 0, tilde: bool = False) -> "NCExpr":
        return cls.word(GenSymbol(species, site, tilde))

    @property
    def terms(self) -> Dict[Word, LaurentPoly]:
        return dict(self._terms)

    def items(self) -> Iterator[Tuple[Word, LaurentPoly]]:
        return iter(sorted(self._terms.items(), key=lambda kv: word_key(kv[0])))

    def words(self) -> List[Word]:
        return [w for w, _ in self.items()]

    def coefficient(self, word: Word) -> LaurentPoly:
        return self._terms.get(tuple(word), LaurentPoly())

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def symbols(self) -> Iterable[GenSymbol]:
        return {s for w in self._terms for s in w}

    def species(self) -> Iterable[Species]:
        return {s.species for s in self.symbols()}

    def is_field_only(self) -> bool:
        return all(s.is_field for s in self.symbols())

    # -- arithmetic -------------------------------------------------------------------
    def __add__(self, other: "NCExpr") -> "NCExpr":
        other = _coerce(other)
        terms = dict(self._terms)
        for w, c in other._terms.items():
            terms[w] = terms[w] + c if w in terms else c
        return NCExpr(terms)

    __radd__ = __add__

    def __neg__(self) -> "NCExpr":
        return NCExpr({w: -c for w, c in self._terms.items()})

    def __sub__(self, other: "NCExpr") -> "NCExpr":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "NCExpr":
        return _coerce(other) - self

    def __mul__(self, other) -> "NCExpr":
        if isinstance(other, (LaurentPoly, Number)):
            c = _as_poly(other)
            return NCExpr({w: p * c for w, p in self._terms.items()})
        terms: Dict[Word, LaurentPoly] = {}
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                w = w1 + w2
                terms[w] = terms[w] + c1 * c2 if w in terms else c1 * c2
        return NCExpr(terms)

    def __rmul__(self, other: Number) -> "NCExpr":
        return self * other

    def __eq__(self, other) -> bool:
        if not isinstance(other, NCExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def isclose(self, other: "NCExpr", atol: float = 1e-12) -> bool:
        return all(c.isclose(LaurentPoly(), atol) for _, c in (self - other).items())

    # -- structural maps --------------------------------------------------------------
    def map_symbols(self, fn: Callable[[GenSymbol], GenSymbol]) -> "NCExpr":
        out = NCExpr()
        for w, c in self._terms.items():
            out = out + NCExpr({tuple(fn(s) for s in w): c})
        return out

    def map_coefficients(self, fn: Callable[[LaurentPoly], LaurentPoly]) -> "NCExpr":
        return NCExpr({w: fn(c) for w, c in self._terms.items()})

    def shifted(self, k: int) -> "NCExpr":
        """Move every site by ``k``."""
        return self.map_symbols(lambda s: s.shifted(k))

    def substitute(self, symbol: GenSymbol, replacement: "NCExpr") -> "NCExpr":
        """Replace every occurrence of ``symbol`` by ``replacement``."""
        return self.substitute_word((symbol,), replacement)

    def substitute_word(self, pattern: Word, replacement: "NCExpr") -> "NCExpr":
        """Replace non-overlapping occurrences of the subword ``pattern``, left to right."""
        pattern = tuple(pattern)
        k = len(pattern)
        out = NCExpr()
        for w, c in self._terms.items():
            acc = NCExpr.scalar(c)
            i, start = 0, 0
            while i <= len(w) - k:
                if w[i:i + k] == pattern:
                    acc = acc * NCExpr.word(*w[start:i]) * replacement
                    i += k
                    start = i
                else:
                    i += 1
            out = out + acc * NCExpr.word(*w[start:])
        return out

    def u_coefficients(self) -> Dict[int, "NCExpr"]:
        """Split by the power of the spectral parameter u."""
        buckets: Dict[int, Dict[Word, LaurentPoly]] = {}
        for w, c in self._terms.items():
            for k in c.degrees("u"):
                bucket = buckets.setdefault(k, {})
                bucket[w] = c.coefficient("u", k)
        return {k: NCExpr(terms) for k, terms in sorted(buckets.items())}

    def __repr__(self) -> str:
        return f"NCExpr({format_expr(self)})"

    def __str__(self) -> str:
        return format_expr(self)


def _coerce(value) -> NCExpr:
    if isinstance(value, NCExpr):
        return value
    if isinstance(value, (LaurentPoly, Number)):
        return NCExpr.scalar(value)
    raise TypeError(f"cannot use {type(value).__name__} as an NCExpr")


@dataclass
class Equation:
    """``expr = 0`` with a provenance label."""

    label: str
    expr: NCExpr


@dataclass
class EquationSet:
    name: str
    equations: List[Equation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.equations)

    def __iter__(self) -> Iterator[Equation]:
        return iter(self.equations)

    def __getitem__(self, label: str) -> Equation:
        for eq in self.equations:
            if eq.label == label:
                return eq
        raise KeyError(label)

    def labels(self) -> List[str]:
        return [eq.label for eq in self.equations]


# ---------------------------------------------------------------------------------------
# Serialization


def format_word(word: Word, base: Optional[int] = None) -> str:
    return ".".join(s.label(base) for s in word)


_UNIT = LaurentPoly.const(1.0)


def _format_coefficient(c: LaurentPoly) -> str:
    text = str(c)
    if len(c) > 1:
        return f"({text})"
    return text


def format_expr(e: NCExpr, base: Optional[int] = None) -> str:
    """One line, terms as ``coefficient * word`` joined by `` + ``, e.g.
    ``(q-q^-1) * bdag[2].b[1]``. Words are printed in canonical order.
    """
    if e.is_zero():
        return "0"
    parts = []
    for w, c in e.items():
        if not w:
            parts.append(_format_coefficient(c) if len(c) > 1 else str(c))
        elif c.isclose(_UNIT):
            parts.append(format_word(w, base))
        elif c.isclose(-_UNIT):
            parts.append("-" + format_word(w, base))
        else:
            parts.append(f"{_format_coefficient(c)} * {format_word(w, base)}")
    return " + ".join(parts)


def format_equation_set(equations: EquationSet, base: Optional[int] = 0) -> str:
    """The golden-file text: a header line, then ``label: expr = 0`` per equation."""
    lines = [f"# {equations.name}"]
    for eq in equations:
        lines.append(f"{eq.label}: {format_expr(eq.expr, base)} = 0")
    return "\n".join(lines) + "\n"
