"""Bethe equations, eigenvalue formulas and sector diagonalization.

Two conventions are supported for every formula:

* ``"analytic"`` (default) is derived from the transfer matrices laxkit builds.
  Periodic: ``(-1)^N e^(2N l_i) = prod_j sinh(l_i - l_j + eta) / sinh(l_i - l_j - eta)``.
  Open (K = 1): ``e^((4 l_i + 2 eta) N) cosh^2(l_i) / cosh^2(l_i + eta)`` equals the
  product of difference factors and ``sinh(l_i + l_j + 2 eta) / sinh(l_i + l_j)``,
  and the open eigenvalue carries the boundary dressings F1, F2.
* ``"printed"`` evaluates the printed formulas literally: a ``(-q^-1)^N``
  prefactor in the periodic equations and the undressed open eigenvalue.

Throughout ``eta = log q`` and ``u = e^lambda``.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import optimize

from qlax.exceptions import (
    BetheError,
    CollidingRoots,
    DimensionMismatch,
    NearPole,
    NoConvergence,
    NoEigenvalueWithin,
    SectorTooLarge,
)
from qlax.fockspace import DEFAULT_Q, Boundary, ChainSpec, SparseOperator, sector_basis
from qlax.laxkit import LaxKit

logger = logging.getLogger(__name__)

CONVENTIONS = ("analytic", "printed")

ROOT_TOLERANCE = 1e-10
COLLISION_MARGIN = 1e-8
POLE_MARGIN = 1e-4
MATCH_TOLERANCE = 1e-8
UNIQUENESS_RATIO = 10.0

CONTINUATION_STEPS = 10
NEWTON_TOLERANCE = 1e-12
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class BetheRootSet:
    """An accepted solution of the Bethe equations.

    ``quantum_numbers`` are the branch integers of the logarithmic equations,
    except for the analytic open chain where they index the one-magnon roots
    the continuation started from (see :func:`open_one_magnon_roots`).
    """

    roots: Tuple[complex, ...]
    N: int
    boundary: Boundary = Boundary.PERIODIC
    quantum_numbers: Tuple[int, ...] = ()
    residual: float = 0.0
    q: complex = DEFAULT_Q
    convention: str = "analytic"

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(complex(r) for r in self.roots))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "q", complex(self.q))
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention '{self.convention}'")

    @property
    def M(self) -> int:
        return len(self.roots)

    @property
    def eta(self) -> complex:
        return complex(np.log(self.q))

    @classmethod
    def vacuum(cls, N: int, boundary=Boundary.PERIODIC, q: complex = DEFAULT_Q, convention: str = "analytic"):
        return cls((), N, boundary, (), 0.0, q, convention)

    def as_dict(self) -> Dict:
        return {
            "M": self.M,
            "boundary": self.boundary.value,
            "convention": self.convention,
            "quantum_numbers": list(self.quantum_numbers),
            "roots": list(self.roots),
            "residual": self.residual,
        }


@dataclass
class SpectrumReport:
    """Formula values against the sector spectrum of the constructed transfer matrix.

    ``values`` are the uncalibrated formula values; the comparison is made
    against ``kappa * values``. ``spectra[j]`` is the full sector spectrum at
    ``points[j]``.
    """

    M: int
    boundary: Boundary
    convention: str
    points: List[complex]
    values: List[complex]
    matched: List[complex]
    kappa: complex
    mismatches: List[float]
    ambiguous: List[bool] = field(default_factory=list)
    spectra: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def mismatch(self) -> float:
        return max(self.mismatches, default=0.0)

    def as_dict(self) -> Dict:
        return {
            "M": self.M,
            "boundary": self.boundary.value,
            "convention": self.convention,
            "kappa": self.kappa,
            "points": list(self.points),
            "values": list(self.values),
            "matched": list(self.matched),
            "mismatch": self.mismatch,
            "ambiguous": any(self.ambiguous),
            "spectra": [list(s) for s in self.spectra],
        }


# ---------------------------------------------------------------------------------------
# Bethe equations


def _log_sinh(x):
    return np.log(np.sinh(x))


def _pair_sum(lam: np.ndarray, term: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """``sum_{j != i} term(l_i, l_j)`` for every i."""
    li, lj = lam[:, None], lam[None, :]
    values = term(li, lj)
    np.fill_diagonal(values, 0.0)
    return values.sum(axis=1)


def _periodic_offset(N: int, eta: complex, convention: str) -> complex:
    # log of the prefactor, on the branch giving roots i pi/2 + i pi k/N (analytic)
    if convention == "analytic":
        return -1j * np.pi * N
    return -N * (1j * np.pi + eta)


def _interaction(lam: np.ndarray, eta: complex, boundary: Boundary, convention: str) -> np.ndarray:
    def difference(li, lj):
        return _log_sinh(li - lj + eta) - _log_sinh(li - lj - eta)

    if boundary is Boundary.PERIODIC:
        return _pair_sum(lam, difference)
    if convention == "analytic":
        return _pair_sum(
            lam, lambda li, lj: difference(li, lj) + _log_sinh(li + lj + 2 * eta) - _log_sinh(li + lj)
        )
    return _pair_sum(lam, lambda li, lj: difference(li, lj) + _log_sinh(li + lj + eta) - _log_sinh(li + lj - eta))


def _free_part(lam: np.ndarray, N: int, eta: complex, boundary: Boundary, convention: str) -> np.ndarray:
    if boundary is Boundary.PERIODIC:
        return 2 * N * lam + _periodic_offset(N, eta, convention)
    if convention == "analytic":
        return (4 * lam + 2 * eta) * N + 2 * np.log(np.cosh(lam)) - 2 * np.log(np.cosh(lam + eta))
    return 4 * N * lam


def log_bae(
    lam: Sequence[complex],
    N: int,
    q: complex,
    boundary=Boundary.PERIODIC,
    branches: Sequence[int] = (),
    s: float = 1.0,
    convention: str = "analytic",
) -> np.ndarray:
    """The logarithmic Bethe equations, with the interaction scaled by ``s``."""
    lam = np.asarray(lam, dtype=complex)
    boundary = Boundary(boundary)
    eta = complex(np.log(q))
    branches = np.asarray(branches if len(branches) else np.zeros(len(lam)), dtype=float)
    out = _free_part(lam, N, eta, boundary, convention) - 2j * np.pi * branches
    if len(lam) > 1 and s != 0.0:
        out = out - s * _interaction(lam, eta, boundary, convention)
    return out


def bae_sides(
    lam: Sequence[complex], N: int, q: complex, boundary=Boundary.PERIODIC, convention: str = "analytic"
) -> Tuple[np.ndarray, np.ndarray]:
    """Left and right hand sides of the Bethe equations in product form."""
    lam = np.asarray(lam, dtype=complex)
    boundary = Boundary(boundary)
    eta = complex(np.log(q))
    li, lj = lam[:, None], lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = np.sinh(li - lj + eta) / np.sinh(li - lj - eta)
        if boundary is Boundary.PERIODIC:
            prefactor = (-1.0) ** N if convention == "analytic" else (-1.0 / q) ** N
            lhs = prefactor * np.exp(2 * N * lam)
        elif convention == "analytic":
            factors = factors * np.sinh(li + lj + 2 * eta) / np.sinh(li + lj)
            lhs = np.exp((4 * lam + 2 * eta) * N) * np.cosh(lam) ** 2 / np.cosh(lam + eta) ** 2
        else:
            factors = factors * np.sinh(li + lj + eta) / np.sinh(li + lj - eta)
            lhs = np.exp(4 * N * lam)
    np.fill_diagonal(factors, 1.0)
    return lhs, factors.prod(axis=1)


def bae_residual(
    lam: Sequence[complex], N: int, q: complex, boundary=Boundary.PERIODIC, convention: str = "analytic"
) -> float:
    """Largest relative defect of the product-form Bethe equations."""
    if len(lam) == 0:
        return 0.0
    lhs, rhs = bae_sides(lam, N, q, boundary, convention)
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return float(np.max(np.abs(lhs - rhs) / scale))


def _split(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def _join(x: np.ndarray) -> np.ndarray:
    M = len(x) // 2
    return x[:M] + 1j * x[M:]


def _newton(
    equations: Callable[[np.ndarray], np.ndarray], guess: np.ndarray, tol: float, max_iter: int
) -> np.ndarray:
    """Solve ``equations(lam) = 0`` from ``guess`` with scipy's hybrid Powell-Newton method."""
    with np.errstate(all="ignore"):
        solution = optimize.root(
            lambda x: _split(equations(_join(x))),
            _split(np.asarray(guess, dtype=complex)),
            method="hybr",
            options={"xtol": tol, "maxfev": max_iter * (2 * len(guess) + 1)},
        )
        lam = _join(solution.x)
        defect = np.abs(equations(lam)).max() if len(lam) else 0.0
    if not np.isfinite(defect) or defect > ROOT_TOLERANCE:
        raise NoConvergence(f"Newton stopped at defect {defect:.3g} ({solution.message})")
    return lam


def open_one_magnon_roots(N: int, q: complex = DEFAULT_Q) -> List[complex]:
    """All one-magnon roots of the analytic open equations, one per crossing pair.

    With ``t = e^(2 lambda)`` the equation is the polynomial
    ``q^(2N+2) t^(2N) (t + 1)^2 - (q^2 t + 1)^2``. The roots ``t = +-q^-1``
    (zeros of ``sinh(2 lambda + eta)``) are spurious, and ``t`` and ``1/(q^2 t)``
    describe the same eigenvalue. Representatives are sorted by ``arg t`` and
    polished by Newton on the logarithmic equation.
    """
    q = complex(q)
    lead = q ** (2 * N + 2) * np.concatenate([[1.0, 2.0, 1.0], np.zeros(2 * N)])
    tail = np.zeros(2 * N + 3, dtype=complex)
    tail[-3:] = [q ** 4, 2 * q ** 2, 1.0]
    candidates = [
        t
        for t in np.roots(lead - tail)
        if min(abs(t - 1 / q), abs(t + 1 / q)) > 1e-6 * max(1.0, abs(t))
    ]

    representatives = []
    used = set()
    for i, t in enumerate(candidates):
        if i in used:
            continue
        partner = 1 / (q ** 2 * t)
        j = min(
            (k for k in range(len(candidates)) if k != i and k not in used),
            key=lambda k: abs(candidates[k] - partner),
            default=None,
        )
        pair = [t] if j is None else [t, candidates[j]]
        used.update({i} if j is None else {i, j})
        representatives.append(max(pair, key=lambda z: (round(abs(z), 9), np.angle(z))))

    roots = []
    for t in sorted(representatives, key=np.angle):
        guess = np.array([np.log(t) / 2])
        branch = np.round(log_bae(guess, N, q, Boundary.OPEN).imag / (2 * np.pi))
        lam = _newton(lambda x: log_bae(x, N, q, Boundary.OPEN, branch), guess, NEWTON_TOLERANCE, MAX_ITERATIONS)
        roots.append(complex(lam[0]))
    logger.debug(f"open one-magnon roots for N={N}: {len(roots)} representatives")
    return roots


def _free_guesses(
    N: int, M: int, q: complex, boundary: Boundary, quantum_numbers: Sequence[int], convention: str
) -> Tuple[np.ndarray, np.ndarray]:
    """Starting roots and branch integers with the interaction switched off."""
    k = np.asarray(quantum_numbers, dtype=float)
    eta = complex(np.log(q))
    if boundary is Boundary.PERIODIC:
        return (2j * np.pi * k - _periodic_offset(N, eta, convention)) / (2 * N), k
    if convention == "printed":
        return 1j * np.pi * k / (2 * N), k

    singles = open_one_magnon_roots(N, q)
    if max(quantum_numbers) >= len(singles):
        raise BetheError(f"quantum number {max(quantum_numbers)} but only {len(singles)} one-magnon roots")
    lam = np.array([singles[int(i)] for i in quantum_numbers], dtype=complex)
    branches = np.round(log_bae(lam, N, q, boundary, s=0.0).imag / (2 * np.pi))
    return lam, branches


def _check_distinct(lam: np.ndarray, boundary: Boundary) -> None:
    for i, j in itertools.combinations(range(len(lam)), 2):
        if abs(lam[i] - lam[j]) <= COLLISION_MARGIN:
            raise CollidingRoots(f"roots {i} and {j} coincide at {lam[i]:.6g}")
        if boundary is Boundary.OPEN and abs(lam[i] + lam[j]) <= COLLISION_MARGIN:
            raise CollidingRoots(f"roots {i} and {j} are opposite ({lam[i]:.6g})")


def solve_bae(
    N: int,
    M: int,
    boundary=Boundary.PERIODIC,
    quantum_numbers: Optional[Sequence[int]] = None,
    q: complex = DEFAULT_Q,
    convention: str = "analytic",
    steps: int = CONTINUATION_STEPS,
    tol: float = NEWTON_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> BetheRootSet:
    """Solve the Bethe equations for ``M`` magnons.

    One magnon starts from the exact free root. More magnons start from the
    free roots and follow the interaction in ``steps`` equal increments of
    ``s`` from 0 to 1, solving to ``tol`` at each step.

    Raises:
        NoConvergence: a Newton solve (or a continuation step) did not converge.
        CollidingRoots: two roots coincide (or are opposite on the open chain).
    """
    boundary = Boundary(boundary)
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention '{convention}'")
    if M < 1:
        raise BetheError(f"solve_bae needs at least one magnon, got M={M}")
    if quantum_numbers is None:
        first = 1 if (boundary is Boundary.OPEN and convention == "printed") else 0
        quantum_numbers = tuple(range(first, first + M))
    quantum_numbers = tuple(int(k) for k in quantum_numbers)
    if len(quantum_numbers) != M:
        raise BetheError(f"{len(quantum_numbers)} quantum numbers for M={M}")

    lam, branches = _free_guesses(N, M, q, boundary, quantum_numbers, convention)
    _check_distinct(lam, boundary)
    schedule = [1.0] if M == 1 else np.linspace(0.0, 1.0, steps + 1)[1:]
    for s in schedule:
        try:
            lam = _newton(lambda x: log_bae(x, N, q, boundary, branches, s, convention), lam, tol, max_iter)
        except NoConvergence as error:
            raise NoConvergence(f"continuation step s={s:.2f} of {quantum_numbers}: {error}") from None
        logger.debug(f"s={s:.2f}: roots {np.round(lam, 6)}")

    _check_distinct(lam, boundary)
    residual = bae_residual(lam, N, q, boundary, convention)
    if not residual < ROOT_TOLERANCE:
        raise NoConvergence(f"product-form residual {residual:.3g} for quantum numbers {quantum_numbers}")
    rootset = BetheRootSet(tuple(lam), N, boundary, quantum_numbers, residual, q, convention)
    logger.info(f"solved {boundary.value} M={M} {quantum_numbers}: residual {residual:.2e}")
    return rootset


def scan_root_sets(
    N: int,
    M: int,
    boundary=Boundary.PERIODIC,
    q: complex = DEFAULT_Q,
    convention: str = "analytic",
    limit: Optional[int] = None,
) -> List[BetheRootSet]:
    """Solve for every increasing choice of quantum numbers and keep the accepted sets.

    Periodic quantum numbers range over 0..N-1; the analytic open chain scans
    the indices of its one-magnon roots.
    """
    boundary = Boundary(boundary)
    if boundary is Boundary.OPEN and convention == "analytic":
        pool = range(len(open_one_magnon_roots(N, q)))
    elif boundary is Boundary.OPEN:
        pool = range(1, 2 * N)
    else:
        pool = range(N)

    found: List[BetheRootSet] = []
    for numbers in itertools.combinations(pool, M):
        try:
            rootset = solve_bae(N, M, boundary, numbers, q, convention)
        except BetheError as error:
            logger.debug(f"{numbers}: {error}")
            continue
        if any(np.allclose(sorted(r.roots, key=np.angle), sorted(rootset.roots, key=np.angle)) for r in found):
            continue
        found.append(rootset)
        if limit is not None and len(found) >= limit:
            break
    logger.info(f"{len(found)} accepted {boundary.value} root sets at M={M}")
    return found


# ---------------------------------------------------------------------------------------
# Eigenvalue formulas


def _reduced(x: complex) -> float:
    """Distance of ``x`` from the nearest multiple of i pi."""
    return abs(complex(x.real, (x.imag + np.pi / 2) % np.pi - np.pi / 2))


def _pole_arguments(rootset: BetheRootSet, lam: complex) -> List[complex]:
    args = [lam - lk for lk in rootset.roots]
    if rootset.boundary is Boundary.OPEN and rootset.convention == "analytic":
        eta = rootset.eta
        args += [lam + lk + eta for lk in rootset.roots]
        args.append(2 * lam + eta)
    return args


def lambda_eval(rootset: BetheRootSet, u: complex) -> complex:
    """The transfer-matrix eigenvalue formula at ``u = e^lambda``.

    Raises:
        NearPole: ``lambda`` is within 1e-4 (mod i pi) of a pole of the formula.
    """
    lam = complex(np.log(complex(u)))
    for x in _pole_arguments(rootset, lam):
        if _reduced(x) <= POLE_MARGIN:
            raise NearPole(f"lambda = {lam:.6g} is within {POLE_MARGIN} of a pole")
    return _formula(rootset, lam)


def _formula(rootset: BetheRootSet, lam: complex) -> complex:
    N, q, eta = rootset.N, rootset.q, rootset.eta
    lk = np.asarray(rootset.roots, dtype=complex)
    d = np.sinh(lam - lk)

    if rootset.boundary is Boundary.PERIODIC:
        first = np.exp(N * lam) * np.prod(np.sinh(lam - lk - eta) / d)
        second = (-1.0) ** N * np.exp(-N * lam) * np.prod(np.sinh(lam - lk + eta) / d)
        return complex(first + second)

    if rootset.convention == "printed":
        first = q ** N * np.exp(2 * N * lam) * np.prod(np.sinh(lam - lk - eta) * np.sinh(lam + lk) / d ** 2)
        second = q ** -N * np.exp(-2 * N * lam) * np.prod(
            np.sinh(lam - lk + eta) * np.sinh(lam + lk + 2 * eta) / d ** 2
        )
        return complex(first + second)

    s = np.sinh(lam + lk + eta)
    denominator = np.sinh(2 * lam + eta)
    F1 = 2 * np.cosh(lam) * np.sinh(lam + eta) / denominator
    F2 = 2 * np.sinh(lam) * np.cosh(lam + eta) / denominator
    X, Y = np.exp(2 * lam), q ** -2 * np.exp(-2 * lam)
    first = F1 * X ** N * np.prod(np.sinh(lam - lk - eta) * np.sinh(lam + lk) / (d * s))
    second = F2 * Y ** N * np.prod(np.sinh(lam - lk + eta) * np.sinh(lam + lk + 2 * eta) / (d * s))
    return complex(first + second)


def pole_residue(rootset: BetheRootSet, k: int, radius: float = 1e-3, samples: int = 64) -> float:
    """``|(1/2 pi i) contour integral of Lambda|`` on a small circle around root ``k``.

    Vanishes (to rounding) when the Bethe equations hold, so the eigenvalue is
    regular at the root; a perturbed root leaves a finite residue.
    """
    theta = 2 * np.pi * np.arange(samples) / samples
    offsets = radius * np.exp(1j * theta)
    center = rootset.roots[k]
    values = np.array([_formula(rootset, center + o) for o in offsets])
    return float(abs(np.mean(values * offsets)))


# ---------------------------------------------------------------------------------------
# Sector diagonalization


def sector_limit(spec: ChainSpec) -> int:
    # the double-row transfer matrix applies a and a^dag to the same site
    return spec.D - 2 if spec.is_open else spec.D - 1


def transfer_at(kit: LaxKit, u: complex) -> SparseOperator:
    return sp.csr_matrix(kit.transfer(point=(complex(u), 1.0)).operator())


def match_spectrum(
    spec: ChainSpec,
    rootset: BetheRootSet,
    points: Sequence[complex],
    tolerance: float = MATCH_TOLERANCE,
    strict: bool = True,
    kit: Optional[LaxKit] = None,
) -> SpectrumReport:
    """Compare ``kappa * Lambda(u)`` with the sector spectrum of the transfer matrix.

    ``kappa`` is fitted once, on the vacuum at the first point, and applied at
    every point. The matched eigenvalue is the one nearest the calibrated
    formula value; a match whose second-nearest eigenvalue is less than ten
    times farther is flagged as ambiguous.

    Raises:
        SectorTooLarge: the sector is not exactly represented at cutoff ``spec.D``.
        NoEigenvalueWithin: with ``strict``, when the largest mismatch exceeds ``tolerance``.
    """
    if rootset.N != spec.N:
        raise DimensionMismatch(f"root set for N={rootset.N} on a chain of length {spec.N}")
    spec = spec.with_boundary(rootset.boundary)
    M = rootset.M
    if M > sector_limit(spec):
        raise SectorTooLarge(f"sector M={M} is truncated at D={spec.D} ({spec.boundary.value} chain)")
    if not points:
        raise BetheError("match_spectrum needs at least one evaluation point")

    kit = kit or LaxKit(spec)
    basis = sector_basis(spec, M)
    vacuum_basis = sector_basis(spec, 0)
    vacuum_set = BetheRootSet.vacuum(spec.N, spec.boundary, rootset.q, rootset.convention)

    transfers = [transfer_at(kit, u) for u in points]
    numeric_vacuum = vacuum_basis.restrict(transfers[0])[0, 0]
    kappa = complex(numeric_vacuum / lambda_eval(vacuum_set, points[0]))

    report = SpectrumReport(M, spec.boundary, rootset.convention, [complex(u) for u in points], [], [], kappa, [])
    for u, T in zip(points, transfers):
        value = lambda_eval(rootset, u)
        target = kappa * value
        spectrum = scipy.linalg.eigvals(basis.restrict(T))
        distance = np.abs(spectrum - target)
        order = np.argsort(distance)
        nearest = spectrum[order[0]]
        mismatch = float(distance[order[0]] / max(1.0, abs(target)))
        ambiguous = len(order) > 1 and distance[order[1]] < UNIQUENESS_RATIO * distance[order[0]]
        if ambiguous and abs(spectrum[order[1]] - nearest) > tolerance * max(1.0, abs(target)):
            logger.warning(f"ambiguous eigenvalue match at u={u:.4g} in sector M={M}")
        else:
            ambiguous = False

        report.values.append(value)
        report.matched.append(complex(nearest))
        report.mismatches.append(mismatch)
        report.ambiguous.append(bool(ambiguous))
        report.spectra.append(np.sort_complex(spectrum))

    if report.mismatch > tolerance:
        message = (
            f"{spec.boundary.value} M={M} ({rootset.convention}): mismatch {report.mismatch:.3g} "
            f"after calibration kappa={kappa:.6g}"
        )
        if strict:
            raise NoEigenvalueWithin(message)
        logger.warning(f"finding: {message}")
    else:
        logger.info(f"matched {spec.boundary.value} M={M} at {len(points)} points, kappa={kappa:.6g}")
    return report


def evolve_expectation(
    spec: ChainSpec,
    O,
    t: float,
    left_state: np.ndarray,
    right_state: np.ndarray,
    M_max: int,
    hamiltonian: Optional[SparseOperator] = None,
) -> complex:
    """``<left| e^(-itH) O e^(itH) |right>`` within the sectors 0..M_max.

    ``H`` defaults to ``H_phys`` of the chain; it conserves the total
    occupation, so it is diagonalized sector by sector and the expectation
    value is the spectral sum over pairs of eigenstates. ``O`` is restricted
    to the same sectors.

    Raises:
        SectorTooLarge: ``M_max`` is beyond the chain, or a state has weight
            outside the sectors.
    """
    if not 0 <= M_max <= spec.N * (spec.D - 1):
        raise SectorTooLarge(f"M_max={M_max} outside 0..{spec.N * (spec.D - 1)}")
    H = sp.csr_matrix(hamiltonian if hamiltonian is not None else LaxKit(spec).hamiltonians().H_phys)
    blocks = [sector_basis(spec, M) for M in range(M_max + 1)]
    index = np.concatenate([b.chain_indices for b in blocks])

    left, right = np.asarray(left_state, dtype=complex), np.asarray(right_state, dtype=complex)
    for name, state in (("left", left), ("right", right)):
        outside = np.delete(state, index)
        if outside.size and np.abs(outside).max() > 1e-12:
            raise SectorTooLarge(f"{name} state has weight outside sectors 0..{M_max}")

    energies, vectors = [], []
    for basis in blocks:
        E, V = scipy.linalg.eig(basis.restrict(H))
        energies.append(E)
        vectors.append(V)
    E = np.concatenate(energies)
    V = scipy.linalg.block_diag(*vectors)
    V_inv = scipy.linalg.inv(V)

    O = sp.csr_matrix(O)
    O_window = O[index][:, index].toarray()
    f = left[index].conj() @ V
    g = V_inv @ right[index]
    O_eigen = V_inv @ O_window @ V
    return complex((f * np.exp(-1j * E * t)) @ O_eigen @ (np.exp(1j * E * t) * g))


def evolve_series(spec: ChainSpec, O, times: Sequence[float], left_state, right_state, M_max: int) -> np.ndarray:
    """:func:`evolve_expectation` on a grid of times, reusing one Hamiltonian."""
    H = LaxKit(spec).hamiltonians().H_phys
    return np.array([evolve_expectation(spec, O, t, left_state, right_state, M_max, H) for t in times])
