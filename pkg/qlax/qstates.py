"""q-numbers, the q-exponential and coherent states of ``b b^dag - q^2 b^dag b = 1``.

The rescaled oscillator uses the symmetric representation

    b|m> = sqrt([m]) |m-1>,    b^dag|m> = sqrt([m+1]) |m+1>,

with ``[n] = (q^(2n) - 1) / (q^2 - 1)``. It is independent of the chain
representation in :mod:`qlax.fockspace`. Series in ``[n]!`` converge inside
the radius ``1 / |1 - q^2|`` when ``|q| < 1``.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from qlax.exceptions import DegenerateQ, OutsideRadius, QStatesError

logger = logging.getLogger(__name__)

MIN_TERMS = 10
DEFAULT_TERMS = 60


def _check_q(q: complex) -> complex:
    q = complex(q)
    if abs(q * q - 1) < 1e-14:
        raise DegenerateQ(f"q^2 = 1 at q = {q:.6g}; [n] is 0/0")
    return q


@dataclass(frozen=True)
class QNumber:
    n: int
    q: complex

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"q-numbers are defined for n >= 0, got {self.n}")
        object.__setattr__(self, "q", _check_q(self.q))

    @property
    def value(self) -> complex:
        q2 = self.q * self.q
        return (q2 ** self.n - 1) / (q2 - 1)


def q_number(n: int, q: complex) -> complex:
    return QNumber(n, q).value


def q_factorial(n: int, q: complex) -> complex:
    """``[1][2]...[n]``, with ``[0]! = 1``.

    Raises:
        DegenerateQ: if ``q^2 = 1``.
    """
    _check_q(q)
    out = 1.0 + 0j
    for j in range(1, n + 1):
        out *= q_number(j, q)
    return out


def radius(q: complex) -> float:
    """Convergence radius of ``sum x^n / [n]!``; infinite for ``|q| >= 1``.

    On the unit circle the q-numbers stay bounded and can come close to zero,
    so no radius is enforced there.
    """
    q = _check_q(q)
    if abs(q) >= 1:
        return np.inf
    return float(1 / abs(1 - q * q))


def _check_radius(x: complex, q: complex, what: str = "|x|") -> None:
    r = radius(q)
    if not abs(x) < r:
        raise OutsideRadius(f"{what} = {abs(x):.6g} is outside the q-exponential radius {r:.6g}")


def _series_terms(x: complex, q: complex, terms: int) -> np.ndarray:
    out = np.empty(terms + 1, dtype=complex)
    out[0] = 1.0
    for n in range(1, terms + 1):
        out[n] = out[n - 1] * x / q_number(n, q)
    return out


def exp_q_series(x: complex, q: complex, terms: int = DEFAULT_TERMS) -> Tuple[complex, float]:
    """Partial sum of ``exp_q(x)`` through ``x^terms / [terms]!`` and a ratio-test bound on the rest.

    The bound is ``|t_(terms+1)| / (1 - rho)`` with ``rho = |x| / |[terms+2]|``;
    it is infinite when ``rho >= 1`` (only possible outside the radius or
    for ``|q| >= 1`` before the terms start to shrink).

    Raises:
        QStatesError: fewer than 10 terms.
        OutsideRadius: ``|x|`` is beyond the radius of convergence.
        DegenerateQ: if ``q^2 = 1``.
    """
    if terms < MIN_TERMS:
        raise QStatesError(f"exp_q needs at least {MIN_TERMS} terms, got {terms}")
    q = _check_q(q)
    _check_radius(x, q)
    series = _series_terms(complex(x), q, terms + 1)
    value = complex(series[:-1].sum())
    rho = abs(x) / abs(q_number(terms + 2, q))
    remainder = abs(series[-1]) / (1 - rho) if rho < 1 else np.inf
    return value, float(remainder)


def exp_q(x: complex, q: complex, terms: int = DEFAULT_TERMS) -> complex:
    value, remainder = exp_q_series(x, q, terms)
    logger.debug(f"exp_q({x:.4g}) with {terms} terms, remainder <= {remainder:.2e}")
    return value


# ---------------------------------------------------------------------------------------
# The rescaled oscillator and its coherent states


def rescaled_operators(q: complex, D: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """``(b, b_dag)`` on the cutoff space ``|0>, ..., |D-1>``."""
    q = _check_q(q)
    weights = np.sqrt(np.array([q_number(m, q) for m in range(1, D)], dtype=complex))
    b = sp.diags(weights, 1, shape=(D, D), format="csr", dtype=complex)
    b_dag = sp.diags(weights, -1, shape=(D, D), format="csr", dtype=complex)
    return b, b_dag


def algebra_residual(q: complex, D: int) -> float:
    """``max |(b b_dag - q^2 b_dag b - 1)|m>|`` over ``m <= D - 2``."""
    b, b_dag = rescaled_operators(q, D)
    relation = (b @ b_dag - q * q * (b_dag @ b) - sp.identity(D, dtype=complex, format="csr")).toarray()
    return float(np.abs(relation[:, : D - 1]).max())


@dataclass
class CoherentVector:
    """A truncated coherent state ``sum_m z^m / sqrt([m]!) |m>``.

    ``tail`` estimates the first dropped amplitude, ``|c_(D-1)| |z| / sqrt(|[D]|)``.
    """

    z: complex
    q: complex
    D: int
    amplitudes: np.ndarray
    tail: float

    def apply(self, op) -> np.ndarray:
        return np.asarray(op @ self.amplitudes)

    def eigen_residual(self, restrict: bool = True) -> float:
        """Norm of ``b|z> - z|z>``; restricted to ``m <= D-2`` the truncation does not enter."""
        b, _ = rescaled_operators(self.q, self.D)
        defect = self.apply(b) - self.z * self.amplitudes
        if restrict:
            defect = defect[: self.D - 1]
        return float(np.linalg.norm(defect))

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def coherent_vector(z: complex, q: complex, D: int) -> CoherentVector:
    """The truncated coherent state with label ``z``.

    Raises:
        OutsideRadius: ``|z|^2`` is beyond the q-exponential radius, so the
            state is not normalizable.
        DegenerateQ: if ``q^2 = 1``.
    """
    if D < 2:
        raise QStatesError(f"cutoff must be at least 2, got {D}")
    q = _check_q(q)
    z = complex(z)
    _check_radius(abs(z) ** 2, q, "|z|^2")
    # sqrt([m]!) as a product of sqrt([m]), the branch rescaled_operators uses
    root_factorials = np.cumprod(np.sqrt([1.0 + 0j] + [q_number(m, q) for m in range(1, D)]))
    powers = np.cumprod(np.concatenate([[1.0 + 0j], np.full(D - 1, z)]))
    amplitudes = powers / root_factorials
    tail = abs(amplitudes[-1]) * abs(z) / np.sqrt(abs(q_number(D, q)))
    logger.debug(f"coherent state z={z:.4g}, D={D}: tail {tail:.2e}")
    return CoherentVector(z, q, D, amplitudes, float(tail))


def overlap(left: CoherentVector, right: CoherentVector) -> complex:
    """``<left|right>`` of two truncated coherent states on the same cutoff space."""
    if left.D != right.D:
        raise QStatesError(f"cutoffs differ: {left.D} vs {right.D}")
    return complex(np.vdot(left.amplitudes, right.amplitudes))
