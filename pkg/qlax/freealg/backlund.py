"""Darboux-matrix relations of the q-oscillator chain.

The Darboux matrix ``M_n`` links the chain ``L_n`` to a second copy ``L~_n``
(tilde fields) through

    M_{n+1} L_n = L~_n M_n                       (space part)
    dM_n/dt = A~_n M_n - M_n A_n                  (time part, for A^+ or A^-)

Each entry of either product is split by powers of u; every nonzero
coefficient is one relation ``expr = 0`` among the Darboux symbols
``A, A_inv, X, Y`` and the fields. The relations are then compared with
the printed ones (see :data:`SPACE_PRINTED`, :data:`PLUS_PRINTED`,
:data:`MINUS_PRINTED`). Printed relations use the opposite sign of the
shift parameter, so they are compared after ``theta -> 1/theta``.

All sites are relative to a reference site ``n = 0``.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from qlax.coeffring import LaurentPoly, Q, THETA, U
from qlax.exceptions import AlgebraError
from qlax.freealg.expr import (
    Equation,
    EquationSet,
    GenSymbol,
    NCExpr,
    Species,
    format_equation_set,
    format_word,
)
from qlax.freealg.rewrite import Replacement, reduce_segments

logger = logging.getLogger(__name__)

_ONE = LaurentPoly.const(1.0)

# Time-part coefficients of A^+ (calligraphic) and A^- (tilde).
ZETA = Q ** -2 - 1
CAL_A = 1 - Q ** -1
CAL_B = Q ** -2 - 1
CAL_C = Q ** -1 - Q
CAL_D = 1 - Q
ZETA_T = Q ** 2 - 1
A_T = 1 - Q
B_T = Q ** -1 - Q
C_T = Q ** 2 - 1
D_T = 1 - Q ** -1

DOTTED = frozenset({Species.X_DOT, Species.Y_DOT, Species.A_DOT, Species.A_INV_DOT})

Matrix = List[List[NCExpr]]


class Branch(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class Classification(str, enum.Enum):
    EXACT = "exact"
    STRUCTURAL = "structural"
    CORRECTED = "corrected"
    MISSING = "missing"
    EXTRA = "extra"
    CONSISTENT = "consistent"


_RANK = {Classification.EXACT: 0, Classification.STRUCTURAL: 1, Classification.CORRECTED: 2}


def _s(species: Species, site: int = 0, tilde: bool = False) -> NCExpr:
    return NCExpr.symbol(species, site, tilde)


def _g(species: Species, site: int = 0, tilde: bool = False) -> GenSymbol:
    return GenSymbol(species, site, tilde)


def _scalar(p: LaurentPoly) -> NCExpr:
    return NCExpr.scalar(p)


def _matmul(a: Matrix, b: Matrix) -> Matrix:
    return [[a[i][0] * b[0][j] + a[i][1] * b[1][j] for j in range(2)] for i in range(2)]


def _sub(a: Matrix, b: Matrix) -> Matrix:
    return [[a[i][j] - b[i][j] for j in range(2)] for i in range(2)]


# ---------------------------------------------------------------------------------------
# Matrices


def lax_matrix(site: int = 0, tilde: bool = False) -> Matrix:
    """``L_n(u)`` with ``a = v b`` and ``a_dag = v b_dag``."""
    v = _s(Species.V, site, tilde)
    b = _s(Species.B, site, tilde)
    b_dag = _s(Species.B_DAG, site, tilde)
    return [[v * U, v * b_dag], [v * b, -(v * U ** -1)]]


def darboux_matrix(site: int = 0) -> Matrix:
    A, A_inv = _s(Species.A, site), _s(Species.A_INV, site)
    return [
        [A * (U * THETA ** -1) - A_inv * (U ** -1 * THETA), _s(Species.X, site)],
        [_s(Species.Y, site), -(A * (U ** -1 * THETA))],
    ]


def darboux_dot_matrix(site: int = 0) -> Matrix:
    A_dot, A_inv_dot = _s(Species.A_DOT, site), _s(Species.A_INV_DOT, site)
    return [
        [A_dot * (U * THETA ** -1) - A_inv_dot * (U ** -1 * THETA), _s(Species.X_DOT, site)],
        [_s(Species.Y_DOT, site), -(A_dot * (U ** -1 * THETA))],
    ]


def time_lax_matrix(branch: Branch, site: int = 0, tilde: bool = False) -> Matrix:
    """The time part A^+ or A^- at ``site``, in its corrected form for A^-."""
    branch = Branch(branch)
    if branch is Branch.PLUS:
        b_dag, b_prev = _s(Species.B_DAG, site, tilde), _s(Species.B, site - 1, tilde)
        hop = b_dag * b_prev
        return [
            [_scalar(ZETA * U ** 2) + hop * CAL_A, b_dag * (U * CAL_B)],
            [b_prev * (U * CAL_C), hop * CAL_D],
        ]
    b, b_dag_prev = _s(Species.B, site, tilde), _s(Species.B_DAG, site - 1, tilde)
    hop = b * b_dag_prev
    return [
        [hop * D_T, b_dag_prev * (U ** -1 * B_T)],
        [-(b * (U ** -1 * C_T)), _scalar(ZETA_T * U ** -2) + hop * A_T],
    ]


# ---------------------------------------------------------------------------------------
# Comparison of relations


def _ratio(p: LaurentPoly, r: LaurentPoly) -> Optional[LaurentPoly]:
    """``p / r`` when it lies in the Laurent ring with a monomial or monomial divisor."""
    if r.is_zero():
        return None
    if r.is_monomial():
        return p * r.monomial_inverse()
    (mp, cp), (mr, cr) = next(p.items()), next(r.items())
    candidate = LaurentPoly({mp * mr ** -1: cp / cr})
    return candidate if (candidate * r).isclose(p) else None


@dataclass
class Comparison:
    classification: Classification
    scalar: LaurentPoly
    factor: Optional[LaurentPoly] = None


def compare(produced: NCExpr, expected: NCExpr, subject: Optional[GenSymbol] = None) -> Optional[Comparison]:
    """Whether ``produced`` is a multiple of ``expected`` term by term.

    EXACT when one scalar relates every term. STRUCTURAL when the terms
    holding ``subject`` share one scalar and every other term shares a
    second one; ``factor`` is then the second over the first.
    """
    if produced.is_zero() or set(produced.terms) != set(expected.terms):
        return None
    ratios = {}
    for word, c in expected.terms.items():
        r = _ratio(produced.coefficient(word), c)
        if r is None:
            return None
        ratios[word] = r
    groups: List[LaurentPoly] = []
    for r in ratios.values():
        if not any(r.isclose(g) for g in groups):
            groups.append(r)
    if len(groups) == 1:
        return Comparison(Classification.EXACT, groups[0])
    if len(groups) != 2 or subject is None:
        return None
    head_words = [w for w in ratios if subject in w]
    if not head_words:
        return None
    head = ratios[head_words[0]]
    if not all(ratios[w].isclose(head) for w in head_words):
        return None
    other = groups[1] if groups[0].isclose(head) else groups[0]
    return Comparison(Classification.STRUCTURAL, head, _ratio(other, head))


def _divide(e: NCExpr, c: LaurentPoly) -> NCExpr:
    terms = {}
    for word, p in e.terms.items():
        r = _ratio(p, c)
        if r is None:
            raise AlgebraError(f"{p} is not divisible by {c}")
        terms[word] = r
    return NCExpr(terms)


def solve_for(expr: NCExpr, symbol: GenSymbol) -> NCExpr:
    """Solve ``expr = 0`` for a symbol that appears alone as a word.

    Raises:
        AlgebraError: ``symbol`` is not a standalone term, appears elsewhere,
            or its coefficient does not divide the rest.
    """
    c = expr.coefficient((symbol,))
    if c.is_zero():
        raise AlgebraError(f"{symbol} is not a standalone term")
    rest = expr - NCExpr.word(symbol, coefficient=c)
    if symbol in rest.symbols():
        raise AlgebraError(f"{symbol} appears in more than one term")
    return _divide(-rest, c)


@dataclass(frozen=True)
class PrintedEquation:
    """A printed relation ``expr = 0``, an optional correction and a note."""

    label: str
    expr: NCExpr
    subject: GenSymbol
    corrected: Optional[NCExpr] = None
    note: str = ""


@dataclass
class EquationMatch:
    expected: str
    classification: Classification
    produced: Tuple[str, ...] = ()
    scalar: Optional[str] = None
    factor: Optional[str] = None
    transform: str = ""
    variant: str = ""
    note: str = ""


@dataclass
class TermDifference:
    word: str
    produced: str
    expected: str


@dataclass
class MismatchReport:
    name: str
    matches: List[EquationMatch] = field(default_factory=list)
    extra: List[str] = field(default_factory=list)
    consistent: List[str] = field(default_factory=list)
    differences: List[TermDifference] = field(default_factory=list)

    def __getitem__(self, label: str) -> EquationMatch:
        for match in self.matches:
            if match.expected == label:
                return match
        raise KeyError(label)

    def count(self, classification: Classification) -> int:
        if classification is Classification.EXTRA:
            return len(self.extra)
        if classification is Classification.CONSISTENT:
            return len(self.consistent)
        return sum(1 for m in self.matches if m.classification is classification)

    def summary(self) -> Dict[str, int]:
        return {c.value: self.count(c) for c in Classification}

    @property
    def clean(self) -> bool:
        return not self.extra and all(m.classification is Classification.EXACT for m in self.matches)


Transform = Tuple[str, Callable[[NCExpr], NCExpr]]

_VARIANTS = (("", 0), ("n -> n-1", -1))


def reflect_theta(e: NCExpr) -> NCExpr:
    return e.map_coefficients(lambda c: c.conjugate_variable("theta"))


def _format_poly(p: Optional[LaurentPoly]) -> Optional[str]:
    return None if p is None else str(p)


def match_equations(
    produced: EquationSet,
    printed: Sequence[PrintedEquation],
    transforms: Sequence[Transform] = (("identity", lambda e: e),),
    reflect: bool = True,
    name: Optional[str] = None,
) -> MismatchReport:
    """Classify every printed relation against the produced ones.

    Each produced relation is tried under every transform, each printed one
    as printed and shifted by one site, after ``theta -> 1/theta`` when
    ``reflect`` is set. The best hit wins: EXACT before STRUCTURAL before
    CORRECTED (exact against the corrected form), then the earliest
    transform. Produced relations that hit nothing are EXTRA, or CONSISTENT
    when a transform reduces them to zero.
    """
    report = MismatchReport(name or produced.name)
    transformed = [[(t_name, fn(eq.expr)) for t_name, fn in transforms] for eq in produced]
    used = set()
    for pe in printed:
        targets = [(False, pe.expr)] + ([(True, pe.corrected)] if pe.corrected is not None else [])
        hits = []
        for corrected, target in targets:
            target = reduce_segments(reflect_theta(target) if reflect else target)
            for v_i, (v_name, shift) in enumerate(_VARIANTS):
                expected = target.shifted(shift)
                subject = pe.subject.shifted(shift)
                for p_i, eq in enumerate(produced):
                    for t_i, (t_name, expr) in enumerate(transformed[p_i]):
                        cmp = compare(expr, expected, subject)
                        if cmp is None or (corrected and cmp.classification is not Classification.EXACT):
                            continue
                        cls = Classification.CORRECTED if corrected else cmp.classification
                        hits.append(((_RANK[cls], t_i, v_i, p_i), eq.label, cls, cmp, t_name, v_name))
        if not hits:
            report.matches.append(EquationMatch(pe.label, Classification.MISSING, note=pe.note))
            logger.info(f"{report.name}: '{pe.label}' not reproduced")
            continue
        hits.sort(key=lambda h: h[0])
        _, _, cls, cmp, t_name, v_name = hits[0]
        labels = tuple(dict.fromkeys(h[1] for h in hits if h[2] is cls))
        used.update(h[1] for h in hits)
        report.matches.append(
            EquationMatch(
                expected=pe.label,
                classification=cls,
                produced=labels,
                scalar=_format_poly(cmp.scalar),
                factor=_format_poly(cmp.factor),
                transform=t_name,
                variant=v_name,
                note=pe.note,
            )
        )
        logger.debug(f"{report.name}: '{pe.label}' {cls.value} via {labels}")
    for p_i, eq in enumerate(produced):
        if eq.label in used:
            continue
        if any(expr.is_zero() for _, expr in transformed[p_i]):
            report.consistent.append(eq.label)
        else:
            report.extra.append(eq.label)
    return report


# ---------------------------------------------------------------------------------------
# Printed relations (in their printed sign of the shift parameter)

_TILDE = True


def _printed_space() -> List[PrintedEquation]:
    A0, A1 = _s(Species.A), _s(Species.A, 1)
    return [
        PrintedEquation(
            "A[n+1].v[n] = v~[n].A[n]",
            A1 * _s(Species.V) - _s(Species.V, 0, _TILDE) * A0,
            _g(Species.A, 1),
        ),
        PrintedEquation(
            "X[n] = theta A[n].bdag[n]",
            _s(Species.X) - A0 * _s(Species.B_DAG) * THETA,
            _g(Species.X),
        ),
        PrintedEquation(
            "X[n+1] = theta^-1 (Ainv[n+1].bdag[n] - bdag~[n].A[n+1])",
            _s(Species.X, 1) - (_s(Species.A_INV, 1) * _s(Species.B_DAG) - _s(Species.B_DAG, 0, _TILDE) * A1) * THETA ** -1,
            _g(Species.X, 1),
        ),
        PrintedEquation(
            "Y[n+1] = theta b~[n].A[n+1]",
            _s(Species.Y, 1) - _s(Species.B, 0, _TILDE) * A1 * THETA,
            _g(Species.Y, 1),
        ),
        PrintedEquation(
            "Y[n] = theta^-1 (A[n].b[n] - b~[n].Ainv[n])",
            _s(Species.Y) - (A0 * _s(Species.B) - _s(Species.B, 0, _TILDE) * _s(Species.A_INV)) * THETA ** -1,
            _g(Species.Y),
        ),
    ]


def _hops(branch: Branch, tilde: bool) -> NCExpr:
    if branch is Branch.PLUS:
        return _s(Species.B_DAG, 0, tilde) * _s(Species.B, -1, tilde)
    return _s(Species.B, 0, tilde) * _s(Species.B_DAG, -1, tilde)


_AINV_NOTE = "-Ainv^2 Adot is read as AinvDot"


def _printed_plus() -> List[PrintedEquation]:
    A, A_inv, X, Y = (_s(s) for s in (Species.A, Species.A_INV, Species.X, Species.Y))
    P, Pt = _hops(Branch.PLUS, False), _hops(Branch.PLUS, _TILDE)
    x_head = _s(Species.X_DOT) - Pt * X * CAL_A + X * P * CAL_D
    y_head = _s(Species.Y_DOT) - Pt * Y * CAL_D + Y * P * CAL_A
    space = _printed_space()
    return [
        PrintedEquation(
            "Xdot[n]",
            x_head - (A_inv * _s(Species.B_DAG) - _s(Species.B, 0, _TILDE) * A) * (CAL_B * THETA ** -1),
            _g(Species.X_DOT),
            corrected=x_head - (A_inv * _s(Species.B_DAG) - _s(Species.B_DAG, 0, _TILDE) * A) * (CAL_B * THETA ** -1),
            note="b~[n] in the source term read as bdag~[n]",
        ),
        PrintedEquation(
            "Ydot[n]",
            y_head - (A * _s(Species.B, -1) - _s(Species.B_DAG, -1, _TILDE) * A_inv) * (CAL_C * THETA ** -1),
            _g(Species.Y_DOT),
            corrected=y_head - (A * _s(Species.B, -1) - _s(Species.B, -1, _TILDE) * A_inv) * (CAL_C * THETA ** -1),
            note="bdag~[n-1] in the source term read as b~[n-1]",
        ),
        PrintedEquation("Adot[n]", _s(Species.A_DOT) - (Pt * A - A * P) * CAL_D, _g(Species.A_DOT)),
        PrintedEquation(
            "AinvDot[n]",
            _s(Species.A_INV_DOT) - (Pt * A_inv - A_inv * P) * CAL_A,
            _g(Species.A_INV_DOT),
            note=_AINV_NOTE,
        ),
        space[1],
        space[3],
    ]


def _printed_minus() -> List[PrintedEquation]:
    A, A_inv, X, Y = (_s(s) for s in (Species.A, Species.A_INV, Species.X, Species.Y))
    P, Pt = _hops(Branch.PLUS, False), _hops(Branch.PLUS, _TILDE)
    Pm, Ptm = _hops(Branch.MINUS, False), _hops(Branch.MINUS, _TILDE)
    space = _printed_space()
    return [
        PrintedEquation(
            "Xdot[n]",
            _s(Species.X_DOT) - Ptm * X * D_T + X * Pm * A_T + A * _s(Species.B_DAG, -1) * (B_T * THETA),
            _g(Species.X_DOT),
        ),
        PrintedEquation(
            "Ydot[n]",
            _s(Species.Y_DOT) - Ptm * Y * A_T + Y * Pm * D_T - _s(Species.B, 0, _TILDE) * A * (CAL_C * THETA),
            _g(Species.Y_DOT),
        ),
        PrintedEquation("Adot[n]", _s(Species.A_DOT) - (Ptm * A - A * Pm) * CAL_D, _g(Species.A_DOT)),
        PrintedEquation(
            "AinvDot[n]",
            _s(Species.A_INV_DOT) - (Pt * A_inv - A_inv * P) * CAL_A,
            _g(Species.A_INV_DOT),
            corrected=_s(Species.A_INV_DOT) - (Ptm * A_inv - A_inv * Pm) * CAL_D,
            note=f"printed line repeats the plus-branch relation; corrected to the minus hops with 1-q. {_AINV_NOTE}",
        ),
        space[2],
        space[4],
    ]


SPACE_PRINTED = _printed_space()
PLUS_PRINTED = _printed_plus()
MINUS_PRINTED = _printed_minus()

UNRESOLVED = (
    "explicit bdag[n] time equation in terms of A[n]",
    "explicit b[n-1] time equation in terms of A[n]",
)


# ---------------------------------------------------------------------------------------
# Extraction


def _extract(matrix: Matrix, name: str) -> EquationSet:
    out = EquationSet(name)
    for i in range(2):
        for j in range(2):
            entry = reduce_segments(matrix[i][j])
            for k, piece in entry.u_coefficients().items():
                if piece.is_zero():
                    continue
                label = f"({i + 1},{j + 1}) u^{k}"
                duplicate = next((eq.label for eq in out if compare(piece, eq.expr) is not None), None)
                if duplicate is not None:
                    logger.debug(f"{name}: {label} is a multiple of {duplicate}")
                    continue
                out.equations.append(Equation(label, piece))
    return out


def darboux_space_equations() -> EquationSet:
    """The independent relations of ``M_{n+1} L_n - L~_n M_n = 0``."""
    product = _sub(_matmul(darboux_matrix(1), lax_matrix(0)), _matmul(lax_matrix(0, tilde=True), darboux_matrix(0)))
    return _extract(product, "space")


def darboux_time_equations(branch: Branch) -> EquationSet:
    """The independent relations of ``dM_n/dt - (A~_n M_n - M_n A_n) = 0``."""
    branch = Branch(branch)
    M = darboux_matrix(0)
    flow = _sub(_matmul(time_lax_matrix(branch, 0, tilde=True), M), _matmul(M, time_lax_matrix(branch, 0)))
    return _extract(_sub(darboux_dot_matrix(0), flow), f"time {branch.value}")


def _shift_down(x: GenSymbol, y: GenSymbol) -> Optional[Replacement]:
    # A[k+1] v[k] -> v~[k] A[k];  vinv~[k] A[k+1] -> A[k] vinv[k]
    if x.species is Species.A and y.species is Species.V and not y.tilde and y.site == x.site - 1:
        return [(_ONE, (_g(Species.V, y.site, _TILDE), _g(Species.A, y.site)))]
    if x.species is Species.V_INV and x.tilde and y.species is Species.A and y.site == x.site + 1:
        return [(_ONE, (_g(Species.A, x.site), _g(Species.V_INV, x.site)))]
    return None


def _shift_up(x: GenSymbol, y: GenSymbol) -> Optional[Replacement]:
    # v~[k] A[k] -> A[k+1] v[k];  A[k] vinv[k] -> vinv~[k] A[k+1]
    if x.species is Species.V and x.tilde and y.species is Species.A and y.site == x.site:
        return [(_ONE, (_g(Species.A, x.site + 1), _g(Species.V, x.site)))]
    if x.species is Species.A and y.species is Species.V_INV and not y.tilde and y.site == x.site:
        return [(_ONE, (_g(Species.V_INV, x.site, _TILDE), _g(Species.A, x.site + 1)))]
    return None


SPACE_TRANSFORMS: Tuple[Transform, ...] = (
    ("identity", lambda e: e),
    ("left vinv~[n]", lambda e: reduce_segments(_s(Species.V_INV, 0, _TILDE) * e, [_shift_down])),
    ("right vinv[n]", lambda e: reduce_segments(e * _s(Species.V_INV), [_shift_up])),
)


def static_solutions(equations: EquationSet) -> Dict[GenSymbol, NCExpr]:
    """``X[n]`` and ``Y[n]`` solved from the time-free relations of a branch."""
    targets = (_g(Species.X), _g(Species.Y))
    out: Dict[GenSymbol, NCExpr] = {}
    for eq in equations:
        if any(s.species in DOTTED for s in eq.expr.symbols()):
            continue
        for target in targets:
            if target in out:
                continue
            try:
                solution = solve_for(eq.expr, target)
            except AlgebraError:
                continue
            if not any(s.species in (Species.X, Species.Y) for s in solution.symbols()):
                out[target] = solution
    return out


def time_transforms(equations: EquationSet) -> Tuple[Transform, ...]:
    solutions = static_solutions(equations)

    def substitute(e: NCExpr) -> NCExpr:
        for symbol, solution in solutions.items():
            e = e.substitute(symbol, solution)
        return reduce_segments(e)

    return (("identity", lambda e: e), ("static X, Y substituted", substitute))


def space_report() -> MismatchReport:
    return match_equations(darboux_space_equations(), SPACE_PRINTED, SPACE_TRANSFORMS)


def time_report(branch: Branch) -> MismatchReport:
    branch = Branch(branch)
    equations = darboux_time_equations(branch)
    printed = PLUS_PRINTED if branch is Branch.PLUS else MINUS_PRINTED
    return match_equations(equations, printed, time_transforms(equations))


# ---------------------------------------------------------------------------------------
# Casimir and the time-independent relations


@dataclass
class CasimirDerivation:
    """``A_inv[n]^2`` in terms of fields, from ``q A^2 + X Y = 1``."""

    rhs: NCExpr
    printed: NCExpr

    @property
    def matches(self) -> bool:
        return self.rhs.isclose(self.printed)


def derive_casimir() -> CasimirDerivation:
    """Substitute the printed ``X[n]`` and ``Y[n] = theta b~[n-1].A[n]`` into the
    quantum determinant and conjugate by ``A_inv[n]``."""
    A, A_inv = _s(Species.A), _s(Species.A_INV)
    det = A * A * Q + _s(Species.X) * _s(Species.Y) - _scalar(_ONE)
    det = det.substitute(_g(Species.X), A * _s(Species.B_DAG) * THETA)
    det = det.substitute(_g(Species.Y), _s(Species.B, -1, _TILDE) * A * THETA)
    # A_inv (q A^2 + X Y - 1) A_inv = q + theta^2 bdag[n] b~[n-1] - A_inv^2
    conjugated = reduce_segments(A_inv * det * A_inv)
    rhs = conjugated + A_inv * A_inv
    printed = _scalar(Q) + _s(Species.B_DAG) * _s(Species.B, -1, _TILDE) * THETA ** 2
    return CasimirDerivation(reduce_segments(rhs), reduce_segments(printed))


def _differences(produced: NCExpr, expected: NCExpr, base: int = 0) -> List[TermDifference]:
    out = []
    for word in sorted(set(produced.terms) | set(expected.terms), key=lambda w: format_word(w, base)):
        p, e = produced.coefficient(word), expected.coefficient(word)
        if not p.isclose(e):
            out.append(TermDifference(format_word(word, base) or "1", str(p), str(e)))
    return out


@dataclass
class BtiDerivation:
    line1: NCExpr
    line2: NCExpr
    printed1: NCExpr
    printed2: NCExpr
    diff: MismatchReport


def derive_bti() -> BtiDerivation:
    """Eliminate ``X[n+1]`` and ``Y[n]`` between the two printed forms of each
    and use the Casimir to remove ``A_inv^2``.

    Both lines come out as ``expr = 0`` normalized so the leading field term
    is ``q bdag[n]`` and ``q b~[n]`` respectively.
    """
    casimir = derive_casimir().rhs
    A0, A1 = _s(Species.A), _s(Species.A, 1)
    A_inv0, A_inv1 = _s(Species.A_INV), _s(Species.A_INV, 1)
    b_dag0, b_dag1 = _s(Species.B_DAG), _s(Species.B_DAG, 1)
    bt, bt_prev, bt_dag = _s(Species.B, 0, _TILDE), _s(Species.B, -1, _TILDE), _s(Species.B_DAG, 0, _TILDE)

    # X[n+1]: theta A[n+1] bdag[n+1] against theta^-1 (A_inv[n+1] bdag[n] - bdag~[n] A[n+1])
    x_gap = A1 * b_dag1 * THETA - (A_inv1 * b_dag0 - bt_dag * A1) * THETA ** -1
    line1 = reduce_segments(A_inv1 * x_gap * THETA)
    line1 = -reduce_segments(line1.substitute_word((_g(Species.A_INV, 1),) * 2, casimir.shifted(1)))

    # Y[n]: theta b~[n-1] A[n] against theta^-1 (A[n] b[n] - b~[n] A_inv[n])
    y_gap = bt_prev * A0 * THETA - (A0 * _s(Species.B) - bt * A_inv0) * THETA ** -1
    line2 = reduce_segments(y_gap * A_inv0 * THETA)
    line2 = reduce_segments(line2.substitute_word((_g(Species.A_INV),) * 2, casimir))

    one = _scalar(_ONE)
    printed1 = reduce_segments(b_dag0 * Q - A_inv1 * bt_dag * A1 - b_dag1 * (one - bt * b_dag0) * THETA ** 2)
    printed2 = reduce_segments(bt * Q - A0 * _s(Species.B) * A_inv0 * Q ** -1 + (one + bt * b_dag0) * bt_prev * THETA ** 2)

    produced = EquationSet("bti", [Equation("line 1", line1), Equation("line 2", line2)])
    printed = [
        PrintedEquation("line 1", printed1, _g(Species.B_DAG)),
        PrintedEquation("line 2", printed2, _g(Species.B, 0, _TILDE)),
    ]
    report = MismatchReport("bti")
    for eq, pe in zip(produced, printed):
        single = match_equations(EquationSet("bti", [eq]), [pe], reflect=False)
        report.matches.extend(single.matches)
        report.differences.extend(_differences(eq.expr, pe.expr))
    return BtiDerivation(line1, line2, printed1, printed2, report)


# ---------------------------------------------------------------------------------------
# Reports


@dataclass
class BacklundReport:
    space: MismatchReport
    plus: MismatchReport
    minus: MismatchReport
    casimir: CasimirDerivation
    bti: BtiDerivation
    unresolved: Tuple[str, ...] = UNRESOLVED

    def reports(self) -> List[MismatchReport]:
        return [self.space, self.plus, self.minus, self.bti.diff]


def backlund_report() -> BacklundReport:
    report = BacklundReport(
        space=space_report(),
        plus=time_report(Branch.PLUS),
        minus=time_report(Branch.MINUS),
        casimir=derive_casimir(),
        bti=derive_bti(),
    )
    for r in report.reports():
        logger.info(f"{r.name}: {r.summary()}")
    return report


def golden_texts() -> Dict[str, str]:
    """Serialized derivations keyed by golden file name."""
    bti = derive_bti()
    bti_set = EquationSet("bti", [Equation("line 1", bti.line1), Equation("line 2", bti.line2)])
    casimir = EquationSet("casimir", [Equation("Ainv[n]^2", derive_casimir().rhs)])
    return {
        "space.txt": format_equation_set(darboux_space_equations()),
        "time_plus.txt": format_equation_set(darboux_time_equations(Branch.PLUS)),
        "time_minus.txt": format_equation_set(darboux_time_equations(Branch.MINUS)),
        "casimir.txt": format_equation_set(casimir),
        "bti.txt": format_equation_set(bti_set),
    }


def describe(report: MismatchReport) -> List[str]:
    """Human-readable lines for a mismatch report."""
    lines = []
    for m in report.matches:
        text = f"{m.expected}: {m.classification.value}"
        if m.produced:
            text += f" <- {', '.join(m.produced)}"
        if m.factor is not None:
            text += f" (factor {m.factor})"
        if m.note:
            text += f" [{m.note}]"
        lines.append(text)
    lines += [f"extra: {label}" for label in report.extra]
    lines += [f"consistent: {label}" for label in report.consistent]
    lines += [f"differs at {d.word}: {d.produced} vs printed {d.expected}" for d in report.differences]
    return lines
