"""Normal ordering of field words and their numeric cross-check on a chain.

Same-sector rules (one site, one of the plain/tilde sectors)::

    b b_dag   -> b_dag b + (q - q^-1) v_inv v_inv
    b v       -> q^-1 v b          b_dag v     -> q v b_dag
    b v_inv   -> q v_inv b         b_dag v_inv -> q^-1 v_inv b_dag
    v v_inv   -> 1                 v_inv v     -> 1

Symbols of different sectors commute and are sorted by (site, sector).
Darboux symbols are opaque: fields never move past them, and only the
adjacent pairs ``A A_inv`` and ``A_inv A`` of one site cancel.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from lru import LRU

from qlax.coeffring import LaurentPoly, Q, gamma, lp_eval
from qlax.exceptions import RewriteLimitExceeded, UnsupportedSpecies
from qlax.fockspace import ChainSpec, identity, safe_residual, site_operator
from qlax.freealg.expr import GenSymbol, NCExpr, Species, Word

logger = logging.getLogger(__name__)

MAX_STEPS = 100_000

Replacement = List[Tuple[LaurentPoly, Word]]
Rule = Callable[[GenSymbol, GenSymbol], Optional[Replacement]]

_ONE = LaurentPoly.const(1.0)


def _same_sector(x: GenSymbol, y: GenSymbol) -> Optional[Replacement]:
    pair = (x.species, y.species)
    swapped = (y, x)
    if pair == (Species.B, Species.B_DAG):
        v_inv = GenSymbol(Species.V_INV, x.site, x.tilde)
        return [(_ONE, swapped), (gamma(), (v_inv, v_inv))]
    if pair == (Species.B, Species.V):
        return [(Q ** -1, swapped)]
    if pair == (Species.B_DAG, Species.V):
        return [(Q, swapped)]
    if pair == (Species.B, Species.V_INV):
        return [(Q, swapped)]
    if pair == (Species.B_DAG, Species.V_INV):
        return [(Q ** -1, swapped)]
    if pair in ((Species.V, Species.V_INV), (Species.V_INV, Species.V)):
        return [(_ONE, ())]
    return None


def field_rule(x: GenSymbol, y: GenSymbol) -> Optional[Replacement]:
    if not (x.is_field and y.is_field):
        return None
    if x.sector != y.sector:
        return [(_ONE, (y, x))] if x.sector > y.sector else None
    return _same_sector(x, y)


def cancel_rule(x: GenSymbol, y: GenSymbol) -> Optional[Replacement]:
    if x.site == y.site and {x.species, y.species} == {Species.A, Species.A_INV}:
        return [(_ONE, ())]
    return None


def _first_hit(word: Word, rules: Sequence[Rule]) -> Optional[Tuple[int, Replacement]]:
    for i in range(len(word) - 1):
        for rule in rules:
            replacement = rule(word[i], word[i + 1])
            if replacement is not None:
                return i, replacement
    return None


def rewrite_word(word: Word, rules: Sequence[Rule], max_steps: int = MAX_STEPS) -> Dict[Word, LaurentPoly]:
    """Apply ``rules`` to the leftmost reducible pair until none applies."""
    out: Dict[Word, LaurentPoly] = {}
    pending = [(tuple(word), _ONE)]
    steps = 0
    while pending:
        w, c = pending.pop()
        hit = _first_hit(w, rules)
        if hit is None:
            out[w] = out[w] + c if w in out else c
            continue
        steps += 1
        if steps > max_steps:
            raise RewriteLimitExceeded(f"more than {max_steps} rewrite steps on a word of length {len(word)}")
        i, replacement = hit
        for factor, piece in replacement:
            pending.append((w[:i] + tuple(piece) + w[i + 2:], c * factor))
    return {w: c for w, c in out.items() if not c.is_zero()}


def rewrite(e: NCExpr, rules: Sequence[Rule], max_steps: int = MAX_STEPS, cache: Optional[LRU] = None) -> NCExpr:
    out = NCExpr()
    for word, coef in e.terms.items():
        if cache is not None and word in cache:
            normal = cache[word]
        else:
            normal = rewrite_word(word, rules, max_steps)
            if cache is not None:
                cache[word] = normal
        out = out + NCExpr({w: c * coef for w, c in normal.items()})
    return out


_normal_cache = LRU(4096)


def normal_order(e: NCExpr, max_steps: int = MAX_STEPS) -> NCExpr:
    """Canonical form of a field-only expression.

    Raises:
        UnsupportedSpecies: ``e`` contains a Darboux symbol.
        RewriteLimitExceeded: a word needed more than ``max_steps`` rewrites.
    """
    opaque = sorted(s.species.value for s in e.symbols() if not s.is_field)
    if opaque:
        raise UnsupportedSpecies(f"normal_order takes field symbols only, got {', '.join(opaque)}")
    cache = _normal_cache if max_steps == MAX_STEPS else None
    return rewrite(e, [field_rule], max_steps, cache)


def reduce_segments(e: NCExpr, extra_rules: Sequence[Rule] = (), max_steps: int = MAX_STEPS) -> NCExpr:
    """Normal-order the field segments between Darboux symbols and cancel ``A A_inv``."""
    return rewrite(e, [field_rule, cancel_rule, *extra_rules], max_steps)


# ---------------------------------------------------------------------------------------
# Numeric cross-check

_OPERATOR_NAMES = {Species.V: "v", Species.V_INV: "v_inv", Species.B: "b", Species.B_DAG: "b_dag"}


def _layout(symbols) -> Tuple[int, int, int]:
    """(site offset, tilde offset, chain length) placing plain then tilde sites on one chain."""
    sites = [s.site for s in symbols] or [1]
    offset = 1 - min(sites)
    width = max(sites) + offset
    has_tilde = any(s.tilde for s in symbols)
    return offset, width, 2 * width if has_tilde else width


def _raising_degree(e: NCExpr, offset: int, width: int) -> int:
    r = 0
    for word in e.terms:
        counts: Dict[int, int] = {}
        for s in word:
            if s.species is Species.B_DAG:
                k = s.site + offset + (width if s.tilde else 0)
                counts[k] = counts.get(k, 0) + 1
        r = max([r, *counts.values()])
    return r


def _evaluate(e: NCExpr, spec: ChainSpec, offset: int, width: int, theta: complex):
    total = None
    for word, coef in e.terms.items():
        op = identity(spec)
        for s in word:
            n = s.site + offset + (width if s.tilde else 0)
            op = op @ site_operator(_OPERATOR_NAMES[s.species], n, spec)
        term = lp_eval(coef, {"q": spec.q, "theta": theta}) * op
        total = term if total is None else total + term
    return total if total is not None else 0 * identity(spec)


def numeric_crosscheck(e: NCExpr, spec: ChainSpec, theta: complex = 1.0) -> float:
    """Residual between ``e`` and its normal form evaluated on truncated chain operators.

    Sites are shifted so the lowest one becomes chain site 1; tilde symbols
    live on a second block of sites after the plain ones. Only ``spec.D`` and
    ``spec.q`` are used. Columns are restricted to occupations where the
    truncation is exact for the raising degree of both sides.
    """
    normal = normal_order(e)
    offset, width, length = _layout(list(e.symbols()) + list(normal.symbols()))
    chain = ChainSpec(N=length, D=spec.D, q=spec.q)
    r = max(_raising_degree(e, offset, width), _raising_degree(normal, offset, width))
    lhs = _evaluate(e, chain, offset, width, theta)
    rhs = _evaluate(normal, chain, offset, width, theta)
    residual = safe_residual(lhs, rhs, r, chain)
    logger.debug(f"crosscheck on {length} sites, r={r}: {residual:.3e}")
    return residual
