"""Spectral-parameter dependent objects of the q-oscillator chain.

Everything here is an :class:`OperatorLaurentMatrix`: a small auxiliary-space
matrix whose entries are finite Laurent series in the two spectral variables
``u`` and ``w`` with sparse chain operators as coefficients. The Lax operator
lives in ``u``; when it is placed in the second auxiliary space ``b`` it is
re-expressed in ``w``. Four-by-four matrices act on ``a (x) b`` with the
combined index ``2 * i_a + i_b``.

:class:`LaxKit` builds the chain objects (monodromies, transfer matrices, the
time-part generators and their Laurent expansions) for one ChainSpec and keeps
the intermediate products in a bounded LRU cache. The module-level functions
are thin wrappers that build a throwaway kit.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from lru import LRU

from qlax.coeffring import U, W, LaurentPoly, alpha, beta, gamma, lp_eval, to_bivariate
from qlax.exceptions import BadRange, DimensionMismatch, NonInvertibleLeading
from qlax.fockspace import (
    Boundary,
    ChainSpec,
    SparseOperator,
    identity,
    safe_columns,
    safe_residual,
    site_operator,
)

logger = logging.getLogger(__name__)

Power = Tuple[int, int]
Series = Dict[Power, SparseOperator]
Point = Optional[Tuple[complex, complex]]

NEGLIGIBLE = 1e-13

# V = antidiag(1, 1), the conjugation used by the crossing map.
SWAP_AUX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def _series_add(x: Series, y: Series, scale: complex = 1.0) -> Series:
    out = dict(x)
    for key, op in y.items():
        out[key] = out[key] + scale * op if key in out else scale * op
    return out


def _series_mul(x: Series, y: Series) -> Series:
    out: Series = {}
    for (pu1, pw1), left in x.items():
        for (pu2, pw2), right in y.items():
            key = (pu1 + pu2, pw1 + pw2)
            product = left @ right
            out[key] = out[key] + product if key in out else product
    return out


def _op_norm(op: SparseOperator) -> float:
    return float(abs(op).max()) if op.nnz else 0.0


class OperatorLaurentMatrix:
    """An ``aux_rows x aux_cols`` matrix of operator-valued Laurent series.

    ``entries[(i, j)]`` maps ``(power of u, power of w)`` to a sparse operator on
    the chain described by ``spec``. Missing entries and missing powers are zero.
    """

    def __init__(
        self,
        spec: ChainSpec,
        aux_rows: int,
        aux_cols: int,
        entries: Optional[Dict[Tuple[int, int], Series]] = None,
    ):
        self.spec = spec
        self.aux_rows = aux_rows
        self.aux_cols = aux_cols
        self.entries: Dict[Tuple[int, int], Series] = {}
        for (i, j), series in (entries or {}).items():
            if not (0 <= i < aux_rows and 0 <= j < aux_cols):
                raise DimensionMismatch(f"entry {(i, j)} outside a {aux_rows}x{aux_cols} matrix")
            if series:
                self.entries[(i, j)] = dict(series)

    # -- constructors -----------------------------------------------------------------
    @classmethod
    def identity(cls, spec: ChainSpec, size: int = 2) -> "OperatorLaurentMatrix":
        one = identity(spec)
        return cls(spec, size, size, {(i, i): {(0, 0): one} for i in range(size)})

    @classmethod
    def from_scalars(
        cls, spec: ChainSpec, rows: Sequence[Sequence[Union[LaurentPoly, complex]]]
    ) -> "OperatorLaurentMatrix":
        """Lift a matrix of scalar Laurent polynomials (in u, w, q) to operators.

        ``q`` is evaluated at ``spec.q``; every coefficient becomes a multiple of
        the chain identity.
        """
        one = identity(spec)
        entries = {}
        for i, row in enumerate(rows):
            for j, value in enumerate(row):
                if not isinstance(value, LaurentPoly):
                    value = LaurentPoly.const(value)
                series = {k: c * one for k, c in to_bivariate(value, spec.q).items()}
                if series:
                    entries[(i, j)] = series
        return cls(spec, len(rows), len(rows[0]), entries)

    @classmethod
    def from_operators(
        cls, spec: ChainSpec, rows: Sequence[Sequence[Dict[int, SparseOperator]]]
    ) -> "OperatorLaurentMatrix":
        """Matrix whose entries are ``{power of w: operator}`` maps."""
        entries = {}
        for i, row in enumerate(rows):
            for j, terms in enumerate(row):
                entries[(i, j)] = {(0, pw): op for pw, op in terms.items()}
        return cls(spec, len(rows), len(rows[0]), entries)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.aux_rows, self.aux_cols

    def entry(self, i: int, j: int) -> Series:
        return self.entries.get((i, j), {})

    def _new(self, rows: int, cols: int, entries) -> "OperatorLaurentMatrix":
        return OperatorLaurentMatrix(self.spec, rows, cols, entries)

    def _check_compatible(self, other: "OperatorLaurentMatrix") -> None:
        if other.spec != self.spec:
            raise DimensionMismatch("operator matrices built on different chains")

    # -- arithmetic -------------------------------------------------------------------
    def __add__(self, other: "OperatorLaurentMatrix") -> "OperatorLaurentMatrix":
        return self._combine(other, 1.0)

    def __sub__(self, other: "OperatorLaurentMatrix") -> "OperatorLaurentMatrix":
        return self._combine(other, -1.0)

    def _combine(self, other: "OperatorLaurentMatrix", scale: complex) -> "OperatorLaurentMatrix":
        self._check_compatible(other)
        if other.shape != self.shape:
            raise DimensionMismatch(f"cannot add {self.shape} and {other.shape} matrices")
        entries = dict(self.entries)
        for key, series in other.entries.items():
            entries[key] = _series_add(entries.get(key, {}), series, scale)
        return self._new(self.aux_rows, self.aux_cols, entries)

    def __neg__(self) -> "OperatorLaurentMatrix":
        return self * -1.0

    def __mul__(self, scalar: complex) -> "OperatorLaurentMatrix":
        entries = {
            key: {p: scalar * op for p, op in series.items()} for key, series in self.entries.items()
        }
        return self._new(self.aux_rows, self.aux_cols, entries)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorLaurentMatrix") -> "OperatorLaurentMatrix":
        self._check_compatible(other)
        if self.aux_cols != other.aux_rows:
            raise DimensionMismatch(f"cannot multiply {self.shape} by {other.shape}")
        entries: Dict[Tuple[int, int], Series] = {}
        for (i, k), left in self.entries.items():
            for j in range(other.aux_cols):
                right = other.entries.get((k, j))
                if right:
                    entries[(i, j)] = _series_add(entries.get((i, j), {}), _series_mul(left, right))
        return self._new(self.aux_rows, other.aux_cols, entries)

    def commutator(self, other: "OperatorLaurentMatrix") -> "OperatorLaurentMatrix":
        return self @ other - other @ self

    def left_multiply(self, op: SparseOperator) -> "OperatorLaurentMatrix":
        """``op`` times every coefficient, ``op`` on the left."""
        entries = {key: {p: op @ c for p, c in s.items()} for key, s in self.entries.items()}
        return self._new(self.aux_rows, self.aux_cols, entries)

    def right_multiply(self, op: SparseOperator) -> "OperatorLaurentMatrix":
        entries = {key: {p: c @ op for p, c in s.items()} for key, s in self.entries.items()}
        return self._new(self.aux_rows, self.aux_cols, entries)

    def times_identity(self, size: int = 2) -> "OperatorLaurentMatrix":
        """A 1x1 matrix (a scalar in auxiliary space) as ``x * 1_size``."""
        if self.shape != (1, 1):
            raise DimensionMismatch(f"times_identity needs a 1x1 matrix, got {self.shape}")
        series = self.entry(0, 0)
        return self._new(size, size, {(i, i): series for i in range(size)})

    # -- auxiliary-space structure ----------------------------------------------------
    def lift(self, space: str) -> "OperatorLaurentMatrix":
        """Embed a 2x2 matrix into ``a (x) b`` acting on space ``'a'`` or ``'b'``."""
        if self.shape != (2, 2):
            raise DimensionMismatch(f"only 2x2 matrices can be lifted, got {self.shape}")
        entries = {}
        for (i, j), series in self.entries.items():
            for spectator in range(2):
                if space == "a":
                    entries[(2 * i + spectator, 2 * j + spectator)] = series
                elif space == "b":
                    entries[(2 * spectator + i, 2 * spectator + j)] = series
                else:
                    raise ValueError(f"unknown auxiliary space '{space}'")
        return self._new(4, 4, entries)

    def partial_trace_a(self) -> "OperatorLaurentMatrix":
        if self.shape != (4, 4):
            raise DimensionMismatch(f"partial trace needs a 4x4 matrix, got {self.shape}")
        entries: Dict[Tuple[int, int], Series] = {}
        for ib in range(2):
            for jb in range(2):
                acc: Series = {}
                for ia in range(2):
                    acc = _series_add(acc, self.entry(2 * ia + ib, 2 * ia + jb))
                entries[(ib, jb)] = acc
        return self._new(2, 2, entries)

    def trace(self) -> "OperatorLaurentMatrix":
        if self.aux_rows != self.aux_cols:
            raise DimensionMismatch(f"trace of a non-square {self.shape} matrix")
        acc: Series = {}
        for i in range(self.aux_rows):
            acc = _series_add(acc, self.entry(i, i))
        return self._new(1, 1, {(0, 0): acc})

    def transpose_aux(self) -> "OperatorLaurentMatrix":
        entries = {(j, i): series for (i, j), series in self.entries.items()}
        return self._new(self.aux_cols, self.aux_rows, entries)

    def conjugate(self, matrix: np.ndarray) -> "OperatorLaurentMatrix":
        """``P M P^-1`` for a numeric square ``P`` of the auxiliary dimension."""
        P = np.asarray(matrix, dtype=complex)
        P_inv = np.linalg.inv(P)
        n = self.aux_rows
        entries: Dict[Tuple[int, int], Series] = {}
        for (k, l), series in self.entries.items():
            for i in range(n):
                for j in range(n):
                    c = P[i, k] * P_inv[l, j]
                    if c != 0:
                        entries[(i, j)] = _series_add(entries.get((i, j), {}), series, c)
        return self._new(n, n, entries)

    def map_powers(self, transform: Callable[[Power], Tuple[Power, complex]]) -> "OperatorLaurentMatrix":
        """Re-key every power ``p -> p'`` and scale its coefficient, ``transform(p) = (p', c)``."""
        entries: Dict[Tuple[int, int], Series] = {}
        for key, series in self.entries.items():
            out: Series = {}
            for power, op in series.items():
                new_power, c = transform(power)
                out[new_power] = out[new_power] + c * op if new_power in out else c * op
            entries[key] = out
        return self._new(self.aux_rows, self.aux_cols, entries)

    def substitute_u(self, factor: complex, sign: int) -> "OperatorLaurentMatrix":
        """``u -> factor * u^sign`` with ``sign`` in {1, -1}."""
        return self.map_powers(lambda p: ((sign * p[0], p[1]), complex(factor) ** p[0]))

    def as_w(self) -> "OperatorLaurentMatrix":
        """Exchange the roles of u and w."""
        return self.map_powers(lambda p: ((p[1], p[0]), 1.0))

    def invert_w(self) -> "OperatorLaurentMatrix":
        return self.map_powers(lambda p: ((p[0], -p[1]), 1.0))

    # -- expansion and evaluation -----------------------------------------------------
    def evaluate(self, u: complex, w: complex = 1.0) -> "OperatorLaurentMatrix":
        """Numeric spectral parameters; the result only carries the power (0, 0)."""
        u, w = complex(u), complex(w)
        entries = {}
        for key, series in self.entries.items():
            acc = None
            for (pu, pw), op in series.items():
                term = (u ** pu * w ** pw) * op
                acc = term if acc is None else acc + term
            entries[key] = {(0, 0): acc}
        return self._new(self.aux_rows, self.aux_cols, entries)

    def coefficient_u(self, k: int) -> "OperatorLaurentMatrix":
        """Coefficient of ``u^k``, still a Laurent series in w."""
        entries = {}
        for key, series in self.entries.items():
            picked = {(0, pw): op for (pu, pw), op in series.items() if pu == k}
            if picked:
                entries[key] = picked
        return self._new(self.aux_rows, self.aux_cols, entries)

    def u_degrees(self) -> Tuple[int, ...]:
        """Powers of u carrying a non-negligible coefficient."""
        found = {
            pu
            for series in self.entries.values()
            for (pu, _), op in series.items()
            if _op_norm(op) > NEGLIGIBLE
        }
        return tuple(sorted(found))

    def operator(self, i: int = 0, j: int = 0) -> SparseOperator:
        """The operator at power (0, 0) of entry (i, j); zero if absent."""
        series = self.entry(i, j)
        for power in series:
            if power != (0, 0) and _op_norm(series[power]) > NEGLIGIBLE:
                raise DimensionMismatch(f"entry {(i, j)} still depends on the spectral parameters")
        return series.get((0, 0), _zero(self.spec))

    def dense(self, u: complex = 1.0, w: complex = 1.0) -> np.ndarray:
        """The full (aux * D^N)-square dense matrix at one spectral point."""
        at = self.evaluate(u, w)
        blocks = [[at.operator(i, j) for j in range(self.aux_cols)] for i in range(self.aux_rows)]
        return sp.bmat(blocks, format="csr").toarray()

    def __repr__(self) -> str:
        return (
            f"OperatorLaurentMatrix({self.aux_rows}x{self.aux_cols}, N={self.spec.N}, "
            f"D={self.spec.D}, u-degrees={self.u_degrees()})"
        )


def _zero(spec: ChainSpec) -> SparseOperator:
    return sp.csr_matrix((spec.dim, spec.dim), dtype=complex)


def matrix_residual(
    lhs: OperatorLaurentMatrix, rhs: OperatorLaurentMatrix, raising_degree: int
) -> float:
    """Largest safe_residual over all entries and all (u, w) powers."""
    if lhs.shape != rhs.shape:
        raise DimensionMismatch(f"{lhs.shape} vs {rhs.shape}")
    spec = lhs.spec
    zero = _zero(spec)
    worst = 0.0
    for i in range(lhs.aux_rows):
        for j in range(lhs.aux_cols):
            left, right = lhs.entry(i, j), rhs.entry(i, j)
            for power in set(left) | set(right):
                r = safe_residual(
                    left.get(power, zero), right.get(power, zero), raising_degree, spec
                )
                worst = max(worst, r)
    return worst


def _stacked(matrix: OperatorLaurentMatrix, layout, cols: np.ndarray) -> np.ndarray:
    zero = _zero(matrix.spec)
    parts = [matrix.entry(i, j).get(power, zero)[:, cols].toarray().ravel() for i, j, power in layout]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


def fit_calibration(
    target: OperatorLaurentMatrix,
    references: Sequence[OperatorLaurentMatrix],
    raising_degree: int,
) -> Tuple[np.ndarray, float]:
    """Least-squares scalars ``c`` with ``target ~ sum_k c_k references[k]``.

    The fit runs over every entry and power restricted to the truncation-safe
    columns; the returned residual is :func:`matrix_residual` of the fitted
    combination.
    """
    layout = sorted(
        {
            (i, j, power)
            for m in (target, *references)
            for (i, j), series in m.entries.items()
            for power in series
        }
    )
    cols = safe_columns(target.spec, raising_degree)
    y = _stacked(target, layout, cols)
    X = np.stack([_stacked(r, layout, cols) for r in references], axis=1)
    coeffs, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = references[0] * coeffs[0]
    for c, r in zip(coeffs[1:], references[1:]):
        fitted = fitted + r * c
    return coeffs, matrix_residual(target, fitted, raising_degree)


@dataclass(frozen=True)
class RMatrix:
    """The six-vertex R-matrix in the basis (11, 12, 21, 22) of ``a (x) b``.

    ``argument`` selects the combination of the spectral variables:
    ``"difference"`` means x = u/w (lambda - mu), ``"sum"`` means x = u*w.
    """

    argument: str
    entries: Tuple[Tuple[LaurentPoly, ...], ...]

    def at(self, u: complex, w: complex, q: complex) -> np.ndarray:
        point = {"u": u, "w": w, "q": q}
        return np.array([[lp_eval(p, point) for p in row] for row in self.entries], dtype=complex)

    def operator(self, spec: ChainSpec) -> OperatorLaurentMatrix:
        return OperatorLaurentMatrix.from_scalars(spec, self.entries)


@dataclass(frozen=True)
class KMatrix:
    """A 2x2 reflection matrix with Laurent entries in u."""

    entries: Tuple[Tuple[LaurentPoly, ...], ...]

    @classmethod
    def identity(cls) -> "KMatrix":
        one, zero = LaurentPoly.const(1.0), LaurentPoly()
        return cls(((one, zero), (zero, one)))

    @classmethod
    def constant(cls, matrix) -> "KMatrix":
        m = np.asarray(matrix, dtype=complex)
        return cls(tuple(tuple(LaurentPoly.const(c) for c in row) for row in m))

    def at(self, u: complex, q: complex) -> np.ndarray:
        point = {"u": u, "q": q}
        return np.array(
            [[lp_eval(p, point) if not p.is_zero() else 0j for p in row] for row in self.entries],
            dtype=complex,
        )

    def operator(self, spec: ChainSpec) -> OperatorLaurentMatrix:
        return OperatorLaurentMatrix.from_scalars(spec, self.entries)


@dataclass(frozen=True)
class Perturbation:
    """Scale one entry of every Lax matrix by ``1 + epsilon`` (negative controls)."""

    entry: Tuple[int, int] = (0, 0)
    epsilon: float = 1e-3


@dataclass
class HamiltonianSet:
    """Laurent coefficients of the transfer matrix and the Hamiltonians built from them.

    ``top_power`` is N for the periodic chain and 2N for the open one.
    """

    top_power: int
    H_plus0: SparseOperator
    H_plus1: SparseOperator
    H_plus2: SparseOperator
    H_minus0: SparseOperator
    H_minus1: SparseOperator
    H_minus2: SparseOperator
    H_plus: SparseOperator
    H_minus: SparseOperator
    H_phys: SparseOperator

    def as_dict(self) -> Dict[str, SparseOperator]:
        return {k: v for k, v in self.__dict__.items() if k != "top_power"}


def leading_inverse(op: SparseOperator, name: str = "leading coefficient") -> SparseOperator:
    """Inverse of a diagonal, invertible operator.

    Raises:
        NonInvertibleLeading: if ``op`` has off-diagonal weight or a vanishing diagonal.
    """
    op = sp.csr_matrix(op)
    diagonal = op.diagonal()
    off = op - sp.diags(diagonal, format="csr")
    scale = max(1.0, float(np.abs(diagonal).max()) if diagonal.size else 0.0)
    if _op_norm(off) > 1e-12 * scale:
        raise NonInvertibleLeading(f"{name} is not diagonal")
    if diagonal.size == 0 or np.abs(diagonal).min() < 1e-300:
        raise NonInvertibleLeading(f"{name} has a vanishing diagonal entry")
    return sp.diags(1.0 / diagonal, format="csr")


def normalize_by_leading(
    lead: OperatorLaurentMatrix, sub: OperatorLaurentMatrix, name: str = "leading coefficient"
) -> OperatorLaurentMatrix:
    """``lead^-1 @ sub`` for a lead that is diagonal in auxiliary space.

    Every diagonal entry of ``lead`` must be a single power of w times an
    invertible diagonal operator.
    """
    rows: Dict[int, Tuple[int, SparseOperator]] = {}
    for (i, j), series in lead.entries.items():
        live = {p: op for p, op in series.items() if _op_norm(op) > NEGLIGIBLE}
        if i != j:
            if live:
                raise NonInvertibleLeading(f"{name} has an off-diagonal auxiliary entry {(i, j)}")
            continue
        if len(live) != 1:
            raise NonInvertibleLeading(f"{name} entry {(i, i)} is not a single monomial")
        (power, op), = live.items()
        if power[0] != 0:
            raise NonInvertibleLeading(f"{name} still depends on u")
        rows[i] = (power[1], leading_inverse(op, name))
    if len(rows) != lead.aux_rows:
        raise NonInvertibleLeading(f"{name} has a vanishing diagonal entry")

    entries = {}
    for (i, j), series in sub.entries.items():
        shift, inverse = rows[i]
        entries[(i, j)] = {(pu, pw - shift): inverse @ op for (pu, pw), op in series.items()}
    return OperatorLaurentMatrix(sub.spec, sub.aux_rows, sub.aux_cols, entries)


# ---------------------------------------------------------------------------------------
# Elementary building blocks


def build_L(spec: ChainSpec, n: int) -> OperatorLaurentMatrix:
    """``L_n(u) = [[u v_n, a_n^dag], [a_n, -u^-1 v_n]]``.

    Raises:
        SiteOutOfRange: unless 1 <= n <= N.
    """
    v = site_operator("v", n, spec)
    return OperatorLaurentMatrix(
        spec,
        2,
        2,
        {
            (0, 0): {(1, 0): v},
            (0, 1): {(0, 0): site_operator("a_dag", n, spec)},
            (1, 0): {(0, 0): site_operator("a", n, spec)},
            (1, 1): {(-1, 0): -v},
        },
    )


CROSSING_FACTORS = {"literal": 1.0, "inverse": -1.0}


def hat_from_L(L: OperatorLaurentMatrix, crossing: str = "inverse") -> OperatorLaurentMatrix:
    """Transpose in auxiliary space, reflect the spectral parameter, conjugate by V.

    ``crossing="literal"`` reflects ``u -> q^-1 u^-1``; ``"inverse"`` uses
    ``u -> -q^-1 u^-1``, which makes ``L_hat(u) L(u^-1) = 1`` exactly.
    """
    try:
        sign = CROSSING_FACTORS[crossing]
    except KeyError:
        raise ValueError(f"unknown crossing '{crossing}'") from None
    factor = sign / L.spec.q
    return L.transpose_aux().substitute_u(factor, -1).conjugate(SWAP_AUX)


def build_hat_L(spec: ChainSpec, n: int, crossing: str = "inverse") -> OperatorLaurentMatrix:
    return hat_from_L(build_L(spec, n), crossing)


def build_R(spec: Optional[ChainSpec] = None, argument: str = "difference") -> RMatrix:
    """The XXZ R-matrix with ``alpha`` on 11/22, ``beta`` on 12/21 and ``gamma`` on the swaps."""
    if argument == "difference":
        x = U * W ** -1
    elif argument == "sum":
        x = U * W
    else:
        raise ValueError(f"unknown R-matrix argument '{argument}'")
    a, b, c, zero = alpha(x), beta(x), gamma(), LaurentPoly()
    entries = (
        (a, zero, zero, zero),
        (zero, b, c, zero),
        (zero, c, b, zero),
        (zero, zero, zero, a),
    )
    return RMatrix(argument, entries)


def build_K(spec: Optional[ChainSpec] = None, matrix=None) -> KMatrix:
    """The reflection matrix; the identity unless a constant ``matrix`` is given."""
    if matrix is None:
        return KMatrix.identity()
    return KMatrix.constant(matrix)


# ---------------------------------------------------------------------------------------
# Chain objects


class LaxKit:
    """Builds and caches the chain objects of one ChainSpec.

    Args:
        spec: the chain.
        crossing: crossing convention of the hatted Lax operator.
        perturbation: if given, every L (and hence every L_hat) is perturbed.
        K_minus, K_plus: reflection matrices of the open chain, identity by default.
        cache_size: number of products the LRU cache keeps.
    """

    def __init__(
        self,
        spec: ChainSpec,
        crossing: str = "inverse",
        perturbation: Optional[Perturbation] = None,
        K_minus: Optional[KMatrix] = None,
        K_plus: Optional[KMatrix] = None,
        cache_size: int = 256,
    ):
        if crossing not in CROSSING_FACTORS:
            raise ValueError(f"unknown crossing '{crossing}'")
        self.spec = spec
        self.crossing = crossing
        self.perturbation = perturbation
        self.K_minus = K_minus or KMatrix.identity()
        self.K_plus = K_plus or KMatrix.identity()
        self._cache = LRU(cache_size)

    def _cached(self, key, build):
        if key in self._cache:
            return self._cache[key]
        value = build()
        self._cache[key] = value
        logger.debug(f"built {key[0]} {key[1:]} for N={self.spec.N}, D={self.spec.D}")
        return value

    @staticmethod
    def _at(matrix: OperatorLaurentMatrix, point: Point) -> OperatorLaurentMatrix:
        return matrix if point is None else matrix.evaluate(*point)

    # -- single-site ------------------------------------------------------------------
    def L(self, n: int, point: Point = None) -> OperatorLaurentMatrix:
        def build():
            if point is not None:
                return self.L(n).evaluate(*point)
            L = build_L(self.spec, n)
            if self.perturbation is not None:
                i, j = self.perturbation.entry
                scaled = {p: (1.0 + self.perturbation.epsilon) * op for p, op in L.entry(i, j).items()}
                L.entries[(i, j)] = scaled
            return L

        return self._cached(("L", n, point), build)

    def hat_L(self, n: int, point: Point = None) -> OperatorLaurentMatrix:
        def build():
            if point is not None:
                return self.hat_L(n).evaluate(*point)
            return hat_from_L(self.L(n), self.crossing)

        return self._cached(("hat_L", n, point), build)

    def L_b(self, n: int, point: Point = None, hatted: bool = False) -> OperatorLaurentMatrix:
        """The Lax operator in the second auxiliary space, at spectral parameter w."""
        base = self.hat_L(n) if hatted else self.L(n)
        return self._at(base.as_w(), point)

    def R(self, argument: str = "difference", point: Point = None) -> OperatorLaurentMatrix:
        return self._cached(
            ("R", argument, point), lambda: self._at(build_R(self.spec, argument).operator(self.spec), point)
        )

    def K(self, which: str, point: Point = None) -> OperatorLaurentMatrix:
        K = self.K_minus if which == "minus" else self.K_plus
        return self._cached(("K", which, point), lambda: self._at(K.operator(self.spec), point))

    # -- monodromies ------------------------------------------------------------------
    def monodromy(self, hi: int, lo: int, hatted: bool = False, point: Point = None) -> OperatorLaurentMatrix:
        """``T(hi, lo) = L_hi ... L_lo``; hatted: ``T_hat(lo, hi) = L_hat_lo ... L_hat_hi``.

        An empty range (``hi = lo - 1``) is the identity.

        Raises:
            BadRange: when ``hi < lo - 1`` or the range leaves 1..N.
        """
        N = self.spec.N
        if hi < lo - 1 or lo < 1 or hi > N:
            raise BadRange(f"monodromy range ({hi}, {lo}) on a chain of length {N}")

        def build():
            out = OperatorLaurentMatrix.identity(self.spec, 2)
            if point is not None:
                out = out.evaluate(*point)
            sites = range(hi, lo - 1, -1) if not hatted else range(lo, hi + 1)
            for n in sites:
                out = out @ (self.hat_L(n, point) if hatted else self.L(n, point))
            return out

        return self._cached(("monodromy", hi, lo, hatted, point), build)

    def double_row(self, point: Point = None) -> OperatorLaurentMatrix:
        """``T K^- T_hat K^+``."""
        N = self.spec.N
        return self._cached(
            ("double_row", point),
            lambda: self.monodromy(N, 1, point=point)
            @ self.K("minus", point)
            @ self.monodromy(N, 1, hatted=True, point=point)
            @ self.K("plus", point),
        )

    def transfer(self, point: Point = None, boundary: Optional[Boundary] = None) -> OperatorLaurentMatrix:
        """The transfer matrix as a 1x1 matrix, per the chain's boundary type."""
        boundary = Boundary(boundary or self.spec.boundary)
        if boundary is Boundary.PERIODIC:
            return self._cached(
                ("transfer", boundary, point), lambda: self.monodromy(self.spec.N, 1, point=point).trace()
            )
        return self._cached(("transfer", boundary, point), lambda: self.double_row(point).trace())

    # -- time-part generators ---------------------------------------------------------
    def generator_B(self, n: int, kind: str = "closed", point: Point = None) -> OperatorLaurentMatrix:
        """The subtracted trace of the time-part generator at site ``n`` (1..N+1).

        ``kind`` is ``"closed"`` (one R at u/w), ``"open"`` (R at u/w between the
        T factors, R at u*w between the T_hat factors) or ``"hatted"`` (the two
        R-matrices exchanged, which is the open generator at ``w -> 1/w``).
        """
        N = self.spec.N
        if not 1 <= n <= N + 1:
            raise BadRange(f"generator site {n} outside 1..{N + 1}")
        if kind not in ("closed", "open", "hatted"):
            raise ValueError(f"unknown generator kind '{kind}'")

        def build():
            left = self.monodromy(N, n, point=point).lift("a")
            right = self.monodromy(n - 1, 1, point=point).lift("a")
            if kind == "closed":
                inner = left @ self.R("difference", point) @ right
            else:
                first, second = ("difference", "sum") if kind == "open" else ("sum", "difference")
                inner = (
                    left
                    @ self.R(first, point)
                    @ right
                    @ self.K("minus", point).lift("a")
                    @ self.monodromy(n - 1, 1, hatted=True, point=point).lift("a")
                    @ self.R(second, point)
                    @ self.monodromy(N, n, hatted=True, point=point).lift("a")
                    @ self.K("plus", point).lift("a")
                )
            return inner.partial_trace_a()

        return self._cached(("generator_B", n, kind, point), build)

    def generator_A(self, n: int, kind: str = "closed", point: Point = None) -> OperatorLaurentMatrix:
        """``A_n = t 1 - B_n`` with the transfer matrix matching ``kind``."""
        boundary = Boundary.PERIODIC if kind == "closed" else Boundary.OPEN

        def build():
            t = self.transfer(point, boundary).times_identity(2)
            return t - self.generator_B(n, kind, point)

        return self._cached(("generator_A", n, kind, point), build)

    # -- Laurent expansions -----------------------------------------------------------
    def hamiltonians(self) -> HamiltonianSet:
        """Read the Hamiltonians off the u-expansion of the transfer matrix.

        Raises:
            NonInvertibleLeading: if a leading coefficient is not an invertible
                diagonal operator.
        """

        def build():
            t = self.transfer()
            P = self.spec.N if self.spec.boundary is Boundary.PERIODIC else 2 * self.spec.N

            def coeff(k):
                return t.coefficient_u(k).entry(0, 0).get((0, 0), _zero(self.spec))

            H = {
                "H_plus0": coeff(P),
                "H_plus1": coeff(P - 1),
                "H_plus2": coeff(P - 2),
                "H_minus0": coeff(-P),
                "H_minus1": coeff(-P + 1),
                "H_minus2": coeff(-P + 2),
            }
            H_plus = (leading_inverse(H["H_plus0"], "H(+,0)") @ H["H_plus2"]).tocsr()
            H_minus = (leading_inverse(H["H_minus0"], "H(-,0)") @ H["H_minus2"]).tocsr()
            q = self.spec.q
            if self.spec.boundary is Boundary.PERIODIC:
                H_phys = q * H_plus + H_minus / q
            else:
                H_phys = q * H_plus
            logger.debug(f"extracted Hamiltonians at top power {P}")
            return HamiltonianSet(P, H_plus=H_plus, H_minus=H_minus, H_phys=H_phys.tocsr(), **H)

        return self._cached(("hamiltonians",), build)

    def closed_B_expansion(self, n: int) -> Dict[str, OperatorLaurentMatrix]:
        """Leading u-coefficients of the closed ``B_n`` and the normalized ``B^+-``.

        ``B(+,k)`` is the coefficient of ``u^(N+1-k)``, ``B(-,k)`` of ``u^(-N-1+k)``.
        """

        def build():
            B = self.generator_B(n, "closed")
            N = self.spec.N
            out = {
                "B_plus0": B.coefficient_u(N + 1),
                "B_plus1": B.coefficient_u(N),
                "B_plus2": B.coefficient_u(N - 1),
                "B_minus0": B.coefficient_u(-N - 1),
                "B_minus1": B.coefficient_u(-N),
                "B_minus2": B.coefficient_u(-N + 1),
            }
            out["B_plus"] = normalize_by_leading(out["B_plus0"], out["B_plus2"], "B(+,0)")
            out["B_minus"] = normalize_by_leading(out["B_minus0"], out["B_minus2"], "B(-,0)")
            return out

        return self._cached(("closed_B_expansion", n), build)

    def open_B_expansion(self, n: int = 1) -> Dict[str, OperatorLaurentMatrix]:
        """Leading u-coefficients of the open ``B_n``; top power is 2N+2."""

        def build():
            B = self.generator_B(n, "open")
            top = 2 * self.spec.N + 2
            out = {
                "B_plus0": B.coefficient_u(top),
                "B_plus1": B.coefficient_u(top - 1),
                "B_plus2": B.coefficient_u(top - 2),
            }
            out["B_plus"] = normalize_by_leading(out["B_plus0"], out["B_plus2"], "B(+,0)")
            return out

        return self._cached(("open_B_expansion", n), build)

    def lax_A_plus(self, n: int) -> OperatorLaurentMatrix:
        """``A^+_n = H^+ 1 - B^+_n - w^2 1`` from the closed expansions."""
        return self._lax_from_expansion(n, "plus", 2)

    def lax_A_minus(self, n: int) -> OperatorLaurentMatrix:
        """``A^-_n = H^- 1 - B^-_n - w^-2 1``."""
        return self._lax_from_expansion(n, "minus", -2)

    def _lax_from_expansion(self, n: int, sign: str, shift_power: int) -> OperatorLaurentMatrix:
        H = self.hamiltonians().H_plus if sign == "plus" else self.hamiltonians().H_minus
        one = identity(self.spec)
        scalar = OperatorLaurentMatrix(
            self.spec, 2, 2, {(i, i): {(0, 0): H, (0, shift_power): -one} for i in range(2)}
        )
        return scalar - self.closed_B_expansion(n)[f"B_{sign}"]

    def open_lax_A(self, n: int) -> OperatorLaurentMatrix:
        """``A_n = q (H^+ 1 - B^+_n)`` from the open expansion of ``B_n``.

        This is the gauge in which ``[H, L_1] = A_2 L_1 - L_1 A_1`` holds at the
        boundary; the bulk closed forms differ from it by a multiple of the identity.
        """
        H = self.hamiltonians().H_plus
        scalar = OperatorLaurentMatrix(self.spec, 2, 2, {(i, i): {(0, 0): H} for i in range(2)})
        return (scalar - self.open_B_expansion(n)["B_plus"]) * self.spec.q

    def open_boundary_A(self) -> OperatorLaurentMatrix:
        """``A_1 = q (H^+ 1 - B^+_1)`` of the open chain."""
        return self.open_lax_A(1)


# ---------------------------------------------------------------------------------------
# Closed forms of the explicit Lax matrices


@dataclass(frozen=True)
class LaxCoefficients:
    """Scalars of the explicit time-part Lax matrices, evaluated at one q."""

    zeta: complex
    A: complex
    B: complex
    C: complex
    D: complex
    zeta_t: complex
    A_t: complex
    B_t: complex
    C_t: complex
    D_t: complex

    @classmethod
    def at(cls, q: complex) -> "LaxCoefficients":
        q = complex(q)
        return cls(
            zeta=q ** -2 - 1,
            B=q ** -2 - 1,
            zeta_t=q ** 2 - 1,
            C_t=q ** 2 - 1,
            A=1 - 1 / q,
            D_t=1 - 1 / q,
            C=1 / q - q,
            B_t=1 / q - q,
            D=1 - q,
            A_t=1 - q,
        )


def _wrap(n: int, N: int) -> int:
    return (n - 1) % N + 1


def _product_v(spec: ChainSpec, power: int = 1) -> SparseOperator:
    out = identity(spec)
    v = [site_operator("v", n, spec) for n in range(1, spec.N + 1)]
    for op in reversed(v):
        for _ in range(power):
            out = out @ op
    return out.tocsr()


def _hops(spec: ChainSpec, kind: str, exclude: Iterable[int] = ()) -> SparseOperator:
    """``sum_j b_dag_{j+1} b_j`` (kind "plus") or ``sum_j b_{j+1} b_dag_j`` ("minus"), periodic."""
    N = spec.N
    out = _zero(spec)
    excluded = {_wrap(j, N) for j in exclude}
    for j in range(1, N + 1):
        if j in excluded:
            continue
        k = _wrap(j + 1, N)
        if kind == "plus":
            out = out + site_operator("b_dag", k, spec) @ site_operator("b", j, spec)
        else:
            out = out + site_operator("b", k, spec) @ site_operator("b_dag", j, spec)
    return out.tocsr()


def _open_bulk(spec: ChainSpec, weight: complex) -> SparseOperator:
    """``sum_{j<N} (b_dag_{j+1} b_j + weight b_{j+1} b_dag_j)``."""
    out = _zero(spec)
    for j in range(1, spec.N):
        out = out + site_operator("b_dag", j + 1, spec) @ site_operator("b", j, spec)
        out = out + weight * site_operator("b", j + 1, spec) @ site_operator("b_dag", j, spec)
    return out.tocsr()


def closed_form_hamiltonians(spec: ChainSpec) -> Dict[str, SparseOperator]:
    """The explicit Hamiltonians and their leading Laurent coefficients."""
    q, N = spec.q, spec.N
    if spec.boundary is Boundary.PERIODIC:
        prod_v = _product_v(spec, 1)
        H_plus, H_minus = _hops(spec, "plus"), _hops(spec, "minus")
        sign = (-1) ** N
        return {
            "H_plus0": prod_v,
            "H_plus2": (prod_v @ H_plus).tocsr(),
            "H_minus0": sign * prod_v,
            "H_minus2": (sign * prod_v @ H_minus).tocsr(),
            "H_plus": H_plus,
            "H_minus": H_minus,
            "H_phys": (q * H_plus + H_minus / q).tocsr(),
        }

    prod_v2 = _product_v(spec, 2)
    b = {n: site_operator("b", n, spec) for n in range(1, N + 1)}
    bd = {n: site_operator("b_dag", n, spec) for n in range(1, N + 1)}
    H_plus = _open_bulk(spec, q ** -2) + bd[1] @ b[1] + q ** -2 * b[N] @ bd[N]
    H_minus = (
        q ** 2 * _open_bulk(spec, q ** -2) + b[1] @ bd[1] + q ** 2 * bd[N] @ b[N]
    )
    return {
        "H_plus0": q ** N * prod_v2,
        "H_plus2": (q ** N * prod_v2 @ H_plus).tocsr(),
        "H_minus0": q ** -N * prod_v2,
        "H_minus2": (q ** -N * prod_v2 @ H_minus).tocsr(),
        "H_plus": H_plus.tocsr(),
        "H_minus": H_minus.tocsr(),
        "H_phys": (q * H_plus).tocsr(),
    }


def closed_form_library(spec: ChainSpec, n: int) -> Dict[str, OperatorLaurentMatrix]:
    """The explicit Lax and B matrices at site ``n``, in the variable w.

    Periodic chains give ``A_plus``, ``A_minus`` (as generated by the
    construction), ``A_minus_printed`` (the literal printed form), the
    normalized ``B_plus``, ``B_minus`` and the raw coefficients ``B_plus0``,
    ``B_plus2``, ``B_minus0``, ``B_minus2``. Open chains give the boundary
    ``A_1`` and ``B_plus_1`` with its raw ``B_plus0_1``, ``B_plus2_1``, plus the
    bulk ``A_plus``, ``A_minus`` at interior sites.
    """
    N, q = spec.N, spec.q
    if not 1 <= n <= N + 1:
        raise BadRange(f"site {n} outside 1..{N + 1}")
    c = LaxCoefficients.at(q)
    g = q - 1 / q
    one = identity(spec)

    def b(k):
        return site_operator("b", _wrap(k, N), spec)

    def bd(k):
        return site_operator("b_dag", _wrap(k, N), spec)

    out: Dict[str, OperatorLaurentMatrix] = {}
    make = lambda rows: OperatorLaurentMatrix.from_operators(spec, rows)  # noqa: E731

    P = (bd(n) @ b(n - 1)).tocsr()
    Pm = (b(n) @ bd(n - 1)).tocsr()
    out["A_plus"] = make(
        [
            [{2: c.zeta * one, 0: c.A * P}, {1: c.B * bd(n)}],
            [{1: c.C * b(n - 1)}, {0: c.D * P}],
        ]
    )
    out["A_minus"] = make(
        [
            [{0: c.D_t * Pm}, {-1: c.B_t * bd(n - 1)}],
            [{-1: -c.C_t * b(n)}, {-2: c.zeta_t * one, 0: c.A_t * Pm}],
        ]
    )
    if spec.boundary is Boundary.OPEN:
        if n == 1:
            out.update(_open_boundary_forms(spec, c))
        return out

    out["A_minus_printed"] = make(
        [
            [{0: c.A_t * (bd(n - 1) @ b(n))}, {-1: c.B_t * bd(n - 1)}],
            [{-1: c.C_t * b(n)}, {-2: c.zeta_t * one, 0: c.D * P}],
        ]
    )

    S_plus = _hops(spec, "plus", exclude=[n - 1])
    S_minus = _hops(spec, "minus", exclude=[n - 1])
    out["B_plus"] = make(
        [
            [{0: S_plus + P / q, 2: -(q ** -2) * one}, {1: (1 - q ** -2) * bd(n)}],
            [{1: g * b(n - 1)}, {0: S_plus + q * P, 2: -one}],
        ]
    )
    out["B_minus"] = make(
        [
            [{0: S_minus + Pm / q, -2: -one}, {-1: g * bd(n - 1)}],
            [{-1: (q ** 2 - 1) * b(n)}, {0: S_minus + q * Pm, -2: -(q ** 2) * one}],
        ]
    )

    prod_v = _product_v(spec, 1)
    out["B_plus0"] = make([[{-1: q * prod_v}, {}], [{}, {-1: prod_v}]])
    out["B_plus2"] = make(
        [
            [{-1: q * S_plus + P, 1: -one / q}, {0: g * bd(n)}],
            [{0: g * b(n - 1)}, {-1: S_plus + q * P, 1: -one}],
        ]
    ).left_multiply(prod_v)
    out["B_minus0"] = make([[{1: prod_v}, {}], [{}, {1: prod_v / q}]])
    out["B_minus2"] = make(
        [
            [{1: S_minus + Pm / q, -1: -one}, {0: g * bd(n - 1)}],
            [{0: g * b(n)}, {1: S_minus / q + Pm, -1: -q * one}],
        ]
    ).left_multiply(prod_v)
    return out


def _open_boundary_forms(spec: ChainSpec, c: LaxCoefficients) -> Dict[str, OperatorLaurentMatrix]:
    N, q = spec.N, spec.q
    g = q - 1 / q
    one = identity(spec)
    b1, bd1 = site_operator("b", 1, spec), site_operator("b_dag", 1, spec)
    bN, bdN = site_operator("b", N, spec), site_operator("b_dag", N, spec)
    n1 = (bd1 @ b1).tocsr()
    bulk = _open_bulk(spec, q ** -2)
    make = lambda rows: OperatorLaurentMatrix.from_operators(spec, rows)  # noqa: E731

    out = {}
    out["A_1"] = make(
        [
            [{2: one / q, -2: one / q, 0: g * n1}, {1: c.C * bd1, -1: c.C * bd1}],
            [{1: c.C * b1, -1: c.C * b1}, {2: q * one, -2: q * one, 0: c.C * (b1 @ bd1)}],
        ]
    )
    tail = bulk + q ** -2 * (bN @ bdN)
    out["B_plus_1"] = make(
        [
            [
                {2: -(q ** -2) * one, -2: -(q ** -2) * one, 0: q ** -2 * n1 + tail},
                {1: (1 - q ** -2) * bd1, -1: (1 - q ** -2) * bd1},
            ],
            [
                {1: (1 - q ** -2) * b1, -1: (1 - q ** -2) * b1},
                {2: -one, -2: -one, 0: q ** 2 * n1 + g ** 2 * one + tail},
            ],
        ]
    )
    prod = q ** N * _product_v(spec, 2)
    out["B_plus0_1"] = make([[{0: q ** 2 * prod}, {}], [{}, {0: prod}]])
    out["B_plus2_1"] = make(
        [
            [
                {0: n1 + bN @ bdN + q ** 2 * bulk, 2: -one, -2: -one},
                {1: (q ** 2 - 1) * bd1, -1: (q ** 2 - 1) * bd1},
            ],
            [
                {1: (1 - q ** -2) * b1, -1: (1 - q ** -2) * b1},
                {0: q ** 2 * n1 + q ** -2 * (bN @ bdN) + g ** 2 * one + bulk, 2: -one, -2: -one},
            ],
        ]
    ).left_multiply(prod)
    return out


def closed_form_eoms(spec: ChainSpec, n: int) -> Dict[str, SparseOperator]:
    """Expected Heisenberg derivatives ``[H_phys, x]`` of the site fields.

    Periodic chains: ``v_dot`` (as generated by the Hamiltonian),
    ``v_dot_printed`` (the printed form), ``b_dot``, ``b_dag_dot``.
    Open chains (``n = 1`` only): the boundary derivatives of ``v_1``, ``b_1``,
    ``b_dag_1``.
    """
    N, q = spec.N, spec.q

    def op(name, k):
        return site_operator(name, _wrap(k, N), spec)

    v, v_inv2 = op("v", n), (op("v_inv", n) @ op("v_inv", n))
    if spec.boundary is Boundary.OPEN:
        if n != 1 or N < 2:
            raise BadRange("open boundary equations of motion need n = 1 and N >= 2")
        b1, b2, bd1, bd2 = op("b", 1), op("b", 2), op("b_dag", 1), op("b_dag", 2)
        return {
            "v_dot": ((1 - q) * v @ bd2 @ b1 + (1 - 1 / q) * v @ b2 @ bd1).tocsr(),
            "b_dot": ((q ** -2 - 1) * (b1 + b2) @ v_inv2).tocsr(),
            "b_dag_dot": ((q ** 2 - 1) * (bd1 + bd2) @ v_inv2).tocsr(),
        }

    b_mix = op("b", n + 1) / q + q * op("b", n - 1)
    bd_mix = q * op("b_dag", n + 1) + op("b_dag", n - 1) / q
    return {
        "v_dot": ((q - 1) * v @ op("b_dag", n) @ b_mix + (1 - q) / q * v @ op("b", n) @ bd_mix).tocsr(),
        "v_dot_printed": ((1 - q) * v @ op("b_dag", n) @ b_mix - (1 - q) * v @ op("b", n) @ bd_mix).tocsr(),
        "b_dot": ((1 / q - q) * v_inv2 @ b_mix).tocsr(),
        "b_dag_dot": ((q - 1 / q) * v_inv2 @ bd_mix).tocsr(),
    }


# ---------------------------------------------------------------------------------------
# Module-level entry points


def monodromy(spec: ChainSpec, hi: int, lo: int, hatted: bool = False) -> OperatorLaurentMatrix:
    return LaxKit(spec).monodromy(hi, lo, hatted)


def transfer(spec: ChainSpec) -> OperatorLaurentMatrix:
    return LaxKit(spec).transfer()


def extract_hamiltonians(spec: ChainSpec) -> HamiltonianSet:
    return LaxKit(spec).hamiltonians()


def generator_A(spec: ChainSpec, n: int, kind: str = "closed") -> OperatorLaurentMatrix:
    return LaxKit(spec).generator_A(n, kind)


def generator_B(spec: ChainSpec, n: int, kind: str = "closed") -> OperatorLaurentMatrix:
    return LaxKit(spec).generator_B(n, kind)


def sample_points(rng: np.random.Generator, count: int, separation: float = 0.1) -> List[Tuple[complex, complex]]:
    """Unit-modulus (u, w) pairs away from the R-matrix degeneracies.

    Rejects pairs with ``|u - w| <= separation`` or ``|u w - 1| <= separation``.
    """
    points = []
    while len(points) < count:
        u, w = np.exp(1j * rng.uniform(0, 2 * np.pi, size=2))
        if abs(u - w) > separation and abs(u * w - 1) > separation:
            points.append((complex(u), complex(w)))
    return points
