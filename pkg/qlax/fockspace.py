"""Truncated Fock-space representation of the q-oscillator chain.

A single site carries the generators ``v, v^-1, a, a^dag`` with

    v|m> = q^(-m-1/2)|m>,   a|m> = (1 - q^(-2m))|m-1>,   a^dag|m> = |m+1>,

and ``b = v^-1 a``, ``b^dag = v^-1 a^dag``. These realize ``[b, b^dag] = (q - q^-1) v^-2``,
``v b = q b v``, ``v b^dag = q^-1 b^dag v`` and the Casimirs ``a^dag a + q v^2 = 1``,
``a a^dag + q^-1 v^2 = 1`` away from the cutoff. Site 1 is the rightmost tensor
factor, matching ``T = L_N ... L_1``.
"""
import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from lru import LRU

from qlax.coeffring import is_admissible_q
from qlax.exceptions import DimensionMismatch, InvalidSpec, SectorTooLarge, SiteOutOfRange

logger = logging.getLogger(__name__)

SparseOperator = sp.csr_matrix

DEFAULT_Q = complex(math.cos(0.7), math.sin(0.7))


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class ChainSpec:
    """Chain length, local cutoff, deformation and boundary type.

    Every construction in qlax is a function of one ChainSpec; it is hashable
    so it can key the operator caches.
    """

    N: int = 3
    D: int = 5
    q: complex = DEFAULT_Q
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "q", complex(self.q))
        try:
            object.__setattr__(self, "boundary", Boundary(self.boundary))
        except ValueError:
            raise InvalidSpec(f"unknown boundary '{self.boundary}'") from None
        if int(self.N) != self.N or self.N < 1:
            raise InvalidSpec(f"chain length must be a positive integer, got {self.N}")
        if int(self.D) != self.D or self.D < 2:
            raise InvalidSpec(f"local cutoff must be at least 2, got {self.D}")
        if not is_admissible_q(self.q, self.D):
            raise InvalidSpec(
                f"q = {self.q:.6g} is zero or a root of unity of order <= {2 * self.D}"
            )

    @property
    def dim(self) -> int:
        return self.D ** self.N

    @property
    def is_open(self) -> bool:
        return self.boundary is Boundary.OPEN

    def with_boundary(self, boundary: Union[str, Boundary]) -> "ChainSpec":
        return ChainSpec(self.N, self.D, self.q, Boundary(boundary))


@dataclass(frozen=True)
class SiteOps:
    v: SparseOperator
    v_inv: SparseOperator
    a: SparseOperator
    a_dag: SparseOperator
    b: SparseOperator
    b_dag: SparseOperator

    def __getitem__(self, name: str) -> SparseOperator:
        return getattr(self, name)


@dataclass
class SectorBasis:
    """Fixed total occupation states, lexicographically ordered.

    ``chain_indices[k]`` is the position of ``states[k]`` in the chain basis and
    ``index_map`` inverts it.
    """

    M: int
    states: Tuple[Tuple[int, ...], ...]
    chain_indices: np.ndarray
    index_map: Dict[int, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def restrict(self, op) -> np.ndarray:
        """Dense block of ``op`` between sector states."""
        idx = self.chain_indices
        return _as_csr(op)[idx][:, idx].toarray()

    def leakage(self, op) -> float:
        """Largest amplitude ``op`` sends from the sector to the rest of the chain."""
        op = _as_csr(op)
        mask = np.ones(op.shape[0], dtype=bool)
        mask[self.chain_indices] = False
        block = op[mask][:, self.chain_indices]
        return float(abs(block).max()) if block.nnz else 0.0

    def embed_vector(self, amplitudes: Sequence[complex], dim: int) -> np.ndarray:
        out = np.zeros(dim, dtype=complex)
        out[self.chain_indices] = amplitudes
        return out


_site_cache = LRU(32)
_occupation_cache = LRU(32)


def site_operators(spec: ChainSpec) -> SiteOps:
    """The single-site q-oscillator generators for ``spec``.

    Raises:
        InvalidSpec: through ChainSpec validation.
    """
    key = (spec.D, spec.q)
    if key in _site_cache:
        return _site_cache[key]

    D, q = spec.D, spec.q
    m = np.arange(D)
    v_diag = q ** (-m.astype(float)) * q ** -0.5
    v = sp.diags(v_diag, format="csr", dtype=complex)
    v_inv = sp.diags(1.0 / v_diag, format="csr", dtype=complex)

    lower = 1.0 - q ** (-2.0 * m[1:])
    a = sp.csr_matrix((lower, (m[:-1], m[1:])), shape=(D, D), dtype=complex)
    a_dag = sp.csr_matrix((np.ones(D - 1), (m[1:], m[:-1])), shape=(D, D), dtype=complex)

    ops = SiteOps(
        v=v, v_inv=v_inv, a=a, a_dag=a_dag, b=(v_inv @ a).tocsr(), b_dag=(v_inv @ a_dag).tocsr()
    )
    _site_cache[key] = ops
    logger.debug(f"built site operators for D={D}, q={q:.6g}")
    return ops


def identity(spec: ChainSpec) -> SparseOperator:
    return sp.identity(spec.dim, dtype=complex, format="csr")


def embed(op, n: int, spec: ChainSpec) -> SparseOperator:
    """Place a single-site operator at site ``n`` of the chain.

    Site 1 is the rightmost Kronecker factor.

    Raises:
        SiteOutOfRange: unless 1 <= n <= N.
    """
    if not 1 <= n <= spec.N:
        raise SiteOutOfRange(f"site {n} outside 1..{spec.N}")
    op = _as_csr(op)
    if op.shape != (spec.D, spec.D):
        raise DimensionMismatch(f"single-site operator has shape {op.shape}, expected D={spec.D}")
    left = sp.identity(spec.D ** (spec.N - n), dtype=complex, format="csr")
    right = sp.identity(spec.D ** (n - 1), dtype=complex, format="csr")
    return sp.kron(left, sp.kron(op, right, format="csr"), format="csr")


def site_operator(name: str, n: int, spec: ChainSpec) -> SparseOperator:
    """Shorthand for ``embed(site_operators(spec).<name>, n, spec)``."""
    return embed(site_operators(spec)[name], n, spec)


def occupations(spec: ChainSpec) -> np.ndarray:
    """Array of shape (D^N, N); entry [k, i] is the occupation of site i+1 in state k."""
    key = (spec.N, spec.D)
    if key not in _occupation_cache:
        index = np.arange(spec.dim)
        _occupation_cache[key] = np.stack(
            [(index // spec.D ** i) % spec.D for i in range(spec.N)], axis=1
        )
    return _occupation_cache[key]


def safe_columns(spec: ChainSpec, raising_degree: int) -> np.ndarray:
    """Chain indices whose occupations all stay at or below ``D - 1 - r``."""
    limit = spec.D - 1 - raising_degree
    return np.nonzero((occupations(spec) <= limit).all(axis=1))[0]


def safe_residual(lhs, rhs, raising_degree: int, spec: ChainSpec) -> float:
    """Normalized max-deviation of two operators on the truncation-safe columns.

    Columns are restricted to states with every ``m_i <= D - 1 - r``; all rows are
    kept. The deviation is divided by ``max(1, |lhs|_max, |rhs|_max)``.

    Args:
        lhs, rhs: operators on the chain (sparse or dense).
        raising_degree: the number of raising generators in either expression.
        spec: the chain both operators live on.

    Returns:
        float: the residual; 0 when no column is safe (logged).
    """
    lhs, rhs = _as_csr(lhs), _as_csr(rhs)
    if lhs.shape != rhs.shape:
        raise DimensionMismatch(f"{lhs.shape} vs {rhs.shape}")
    if lhs.shape != (spec.dim, spec.dim):
        raise DimensionMismatch(f"operators of shape {lhs.shape} on a chain of dim {spec.dim}")
    cols = safe_columns(spec, raising_degree)
    if len(cols) == 0:
        logger.warning(f"no safe columns at D={spec.D} for raising degree {raising_degree}")
        return 0.0
    diff = (lhs - rhs)[:, cols]
    scale = max(1.0, _max_abs(lhs), _max_abs(rhs))
    return _max_abs(diff) / scale


def sector_basis(spec: ChainSpec, M: int) -> SectorBasis:
    """Occupation states with total ``M``, lexicographic in (m_1, ..., m_N)."""
    if not 0 <= M <= spec.N * (spec.D - 1):
        raise SectorTooLarge(f"sector M={M} outside 0..{spec.N * (spec.D - 1)}")
    states = tuple(
        s for s in itertools.product(range(spec.D), repeat=spec.N) if sum(s) == M
    )
    weights = spec.D ** np.arange(spec.N)
    chain_indices = np.array([int(np.dot(s, weights)) for s in states], dtype=int)
    return SectorBasis(
        M=M,
        states=states,
        chain_indices=chain_indices,
        index_map={int(c): k for k, c in enumerate(chain_indices)},
    )


def vacuum(spec: ChainSpec) -> np.ndarray:
    out = np.zeros(spec.dim, dtype=complex)
    out[0] = 1.0
    return out


def _as_csr(op) -> SparseOperator:
    if sp.issparse(op):
        return op.tocsr()
    return sp.csr_matrix(np.asarray(op, dtype=complex))


def _max_abs(op) -> float:
    op = _as_csr(op)
    return float(abs(op).max()) if op.nnz else 0.0
