"""Command-line runs of the verification suites and their JSON report.

A run is described by a :class:`RunConfig`, read from JSON and overridden by
``QLAX_SEED`` and command-line flags. Each selected suite produces a
:class:`SuiteResult`; independent suites run as ray tasks unless ``jobs`` is 1.

Exit codes: 0 every binding check passed, 1 a check failed, 2 the
configuration is invalid, 3 a file could not be read or written.
"""
import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import ray

from qlax.actors import check_row, get_check_logger
from qlax.bethe import (
    MATCH_TOLERANCE,
    ROOT_TOLERANCE,
    BetheRootSet,
    evolve_expectation,
    evolve_series,
    match_spectrum,
    pole_residue,
    scan_root_sets,
    sector_limit,
    solve_bae,
)
from qlax.exceptions import InvalidSpec, NoConvergence, NoEigenvalueWithin, ParseError, ValidationError
from qlax.fockspace import DEFAULT_Q, Boundary, ChainSpec, identity, sector_basis, site_operator
from qlax.freealg import Classification, GenSymbol, NCExpr, backlund_report, golden_texts, numeric_crosscheck
from qlax.freealg.backlund import describe
from qlax.freealg.expr import format_expr
from qlax.laxkit import LaxKit, Perturbation
from qlax.qstates import algebra_residual, coherent_vector, exp_q, overlap, q_number
from qlax.verify import CheckResult, SuiteRunner, VerificationReport, run_closed_suite, run_negative_controls, run_open_suite

logger = logging.getLogger(__name__)

SCHEMA = "qlax.report/1"
SUITES = ("closed", "open", "backlund", "bethe", "qstates")
SEED_VARIABLE = "QLAX_SEED"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_COHERENT = {"q": 0.6, "z": 0.3, "w": 0.2, "D": 25}
RANDOM_WORDS = 200
SIGNIFICANT_DIGITS = 12


# ---------------------------------------------------------------------------------------
# Configuration


def _integer(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(path, f"must be at least {minimum}, got {value}")
    return int(value)


def _real(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _complex(value, path: str) -> complex:
    """A number, ``[re, im]`` as the report writes it, or ``{"re": x, "im": y}``."""
    if isinstance(value, Mapping):
        _reject_unknown(value, ("re", "im"), path)
        return complex(_real(value.get("re", 0.0), f"{path}.re"), _real(value.get("im", 0.0), f"{path}.im"))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(_real(value[0], f"{path}[0]"), _real(value[1], f"{path}[1]"))
    if isinstance(value, complex):
        return value
    return complex(_real(value, path))


def parse_q(value, path: str = "q") -> complex:
    """``q`` as a phase on the unit circle, ``{"modulus", "phase"}`` or ``{"re", "im"}``."""
    if isinstance(value, complex):
        return value
    if isinstance(value, Mapping):
        if "modulus" in value or "phase" in value:
            _reject_unknown(value, ("modulus", "phase"), path)
            modulus = _real(value.get("modulus", 1.0), f"{path}.modulus")
            phase = _real(value.get("phase", 0.0), f"{path}.phase")
            return complex(modulus * math.cos(phase), modulus * math.sin(phase))
        return _complex(value, path)
    phase = _real(value, path)
    return complex(math.cos(phase), math.sin(phase))


def _reject_unknown(data: Mapping, known: Sequence[str], path: str = "") -> None:
    for key in data:
        if key not in known:
            raise ValidationError(f"{path}.{key}" if path else str(key), "unknown key")


@dataclass
class RunConfig:
    """Everything one run needs; validated on construction."""

    N: int = 3
    D: int = 5
    q: complex = DEFAULT_Q
    boundary: str = "periodic"
    suites: Tuple[str, ...] = SUITES
    seed: int = 42
    samples: int = 10
    M_max: int = 2
    tolerances: Dict[str, float] = field(default_factory=dict)
    coherent: Dict = field(default_factory=lambda: dict(DEFAULT_COHERENT))
    output: Optional[str] = None
    jobs: int = len(SUITES)
    deterministic: bool = False
    log_csv: Optional[str] = None
    write_golden: Optional[str] = None

    def __post_init__(self):
        self.N = _integer(self.N, "N", 1)
        self.D = _integer(self.D, "D", 2)
        self.q = parse_q(self.q)
        self.seed = _integer(self.seed, "seed", 0)
        self.samples = _integer(self.samples, "samples", 1)
        self.M_max = _integer(self.M_max, "M_max", 1)
        self.jobs = _integer(self.jobs, "jobs", 1)
        self.deterministic = bool(self.deterministic)

        if isinstance(self.suites, str) or not isinstance(self.suites, (list, tuple)) or not self.suites:
            raise ValidationError("suites", f"expected a non-empty list, got {self.suites!r}")
        for i, name in enumerate(self.suites):
            if name not in SUITES:
                raise ValidationError(f"suites[{i}]", f"unknown suite '{name}'")
        self.suites = tuple(name for name in SUITES if name in self.suites)

        if not isinstance(self.tolerances, Mapping):
            raise ValidationError("tolerances", "expected an object of check name to tolerance")
        self.tolerances = {str(k): _real(v, f"tolerances.{k}") for k, v in self.tolerances.items()}
        for name, tolerance in self.tolerances.items():
            if tolerance <= 0:
                raise ValidationError(f"tolerances.{name}", "must be positive")

        if not isinstance(self.coherent, Mapping):
            raise ValidationError("coherent", "expected an object")
        _reject_unknown(self.coherent, tuple(DEFAULT_COHERENT), "coherent")
        coherent = {**DEFAULT_COHERENT, **self.coherent}
        self.coherent = {
            "q": _complex(coherent["q"], "coherent.q"),
            "z": _complex(coherent["z"], "coherent.z"),
            "w": _complex(coherent["w"], "coherent.w"),
            "D": _integer(coherent["D"], "coherent.D", 2),
        }

        for name in ("output", "log_csv", "write_golden"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, str):
                raise ValidationError(name, f"expected a path, got {value!r}")

        try:
            self.spec = ChainSpec(self.N, self.D, self.q, self.boundary)
        except InvalidSpec as error:
            raise ValidationError("spec", str(error)) from None
        self.boundary = self.spec.boundary.value

    def as_dict(self) -> Dict:
        """The config echo of the report; ``parse_config`` accepts it back."""
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["q"] = {"modulus": abs(self.q), "phase": float(np.angle(self.q))}
        out["suites"] = list(self.suites)
        return out


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(RunConfig))


def parse_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Defaults, then the JSON file, then ``QLAX_SEED``, then ``overrides``.

    ``None`` values in ``overrides`` are ignored; ``tolerances`` and
    ``coherent`` are merged key by key.

    Raises:
        ParseError: the file is not valid JSON.
        ValidationError: an unknown key or a bad value, with its field path.
        OSError: the file cannot be read.
    """
    data: Dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as error:
            raise ParseError(f"{path}: {error}") from None
        if not isinstance(loaded, dict):
            raise ValidationError("<root>", "the config file must hold a JSON object")
        data.update(loaded)

    environ = os.environ if environ is None else environ
    if environ.get(SEED_VARIABLE):
        try:
            data["seed"] = int(environ[SEED_VARIABLE])
        except ValueError:
            raise ValidationError(SEED_VARIABLE, f"not an integer: {environ[SEED_VARIABLE]!r}") from None

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(data.get(key), Mapping):
            data[key] = {**data[key], **value}
        else:
            data[key] = value

    _reject_unknown(data, CONFIG_KEYS)
    config = RunConfig(**data)
    logger.debug(f"config: {config.as_dict()}")
    return config


# ---------------------------------------------------------------------------------------
# Suites


Observer = Optional[Callable[[CheckResult], None]]


@dataclass
class SuiteResult:
    name: str
    report: VerificationReport
    details: Dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def overall(self) -> bool:
        return self.report.overall


def _controls(spec: ChainSpec, config: RunConfig, observer: Observer) -> List[CheckResult]:
    checks = []
    for entry in ((0, 0), (0, 1), (1, 0), (1, 1)):
        report = run_negative_controls(spec, Perturbation(entry, 1e-3), seed=config.seed, observer=observer)
        checks.extend(report.checks)
    return checks


def closed_suite(config: RunConfig, observer: Observer = None) -> SuiteResult:
    spec = config.spec.with_boundary(Boundary.PERIODIC)
    report = run_closed_suite(spec, seed=config.seed, samples=config.samples, observer=observer)
    report.checks.extend(_controls(spec, config, observer))
    return SuiteResult("closed", report)


def open_suite(config: RunConfig, observer: Observer = None) -> SuiteResult:
    spec = config.spec.with_boundary(Boundary.OPEN)
    report = run_open_suite(spec, seed=config.seed, samples=config.samples, observer=observer)
    report.checks.extend(_controls(spec, config, observer))
    return SuiteResult("open", report)


FIELD_NAMES = ("v", "v_inv", "b", "b_dag")
MAX_WORD_LENGTH = 6


def random_word(rng: np.random.Generator) -> NCExpr:
    """A field word of length 1..6 on two sites, each symbol plain or tilde at random."""
    length = int(rng.integers(1, MAX_WORD_LENGTH + 1))
    return NCExpr.word(
        *(
            GenSymbol(FIELD_NAMES[rng.integers(4)], int(rng.integers(1, 3)), bool(rng.integers(2)))
            for _ in range(length)
        )
    )


def _random_word_residual(spec: ChainSpec, rng: np.random.Generator, count: int) -> float:
    return max(numeric_crosscheck(random_word(rng), spec) for _ in range(count))


def backlund_suite(config: RunConfig, observer: Observer = None) -> SuiteResult:
    run = SuiteRunner(None, observer)
    derived = []

    def derive():
        derived.append(backlund_report())
        return 0.0

    run.check("derivation", derive, 0.0)
    if not derived:
        return SuiteResult("backlund", run.report)
    bt = derived[0]

    for r in bt.reports():
        run.check(f"{r.name} complete", lambda r=r: float(r.count(Classification.MISSING)), 0.0)
        non_exact = sum(r.count(c) for c in (Classification.STRUCTURAL, Classification.CORRECTED, Classification.EXTRA))
        run.check(f"{r.name} exact", lambda n=non_exact: float(n), 0.0, informational=True)

    run.check("casimir", lambda: 0.0 if bt.casimir.matches else 1.0, 0.0)
    run.check(
        "casimir crosscheck",
        lambda: numeric_crosscheck(bt.casimir.rhs, ChainSpec(N=2, D=config.D, q=config.q), theta=1.3),
        1e-10,
    )
    run.check("bti line 1", lambda: 0.0 if bt.bti.line1.isclose(bt.bti.printed1) else 1.0, 0.0)
    run.check("bti line 2", lambda: 0.0 if bt.bti.line2.isclose(bt.bti.printed2) else 1.0, 0.0, informational=True)

    rng = np.random.default_rng(config.seed)
    run.check(
        "rewriter crosscheck",
        lambda: _random_word_residual(ChainSpec(N=2, D=max(config.D, 7), q=config.q), rng, RANDOM_WORDS),
        1e-9,
    )

    details = {
        "reports": {r.name: {"summary": r.summary(), "lines": describe(r)} for r in bt.reports()},
        "casimir": format_expr(bt.casimir.rhs, base=0),
        "unresolved": list(bt.unresolved),
    }
    return SuiteResult("backlund", run.report, details)


def _spectral_points(rng: np.random.Generator, count: int = 5) -> List[complex]:
    return list(np.exp(rng.uniform(-0.4, 0.4, count) + 1j * rng.uniform(0, 2 * np.pi, count)))


def _window_state(spec: ChainSpec, M_max: int, rng: np.random.Generator) -> np.ndarray:
    index = np.concatenate([sector_basis(spec, M).chain_indices for M in range(M_max + 1)])
    state = np.zeros(spec.dim, dtype=complex)
    state[index] = rng.normal(size=len(index)) + 1j * rng.normal(size=len(index))
    return state / np.linalg.norm(state)


def bethe_suite(config: RunConfig, observer: Observer = None) -> SuiteResult:
    run = SuiteRunner(config.spec, observer)
    rng = np.random.default_rng(config.seed)
    points = _spectral_points(rng)
    N, q = config.N, config.q
    details: Dict[str, List] = {"spectra": [], "roots": []}
    expected_kappa = {Boundary.PERIODIC: q ** (-N / 2), Boundary.OPEN: 1.0 + 0j}

    for boundary in Boundary:
        spec = config.spec.with_boundary(boundary)
        kit = LaxKit(spec)
        label = boundary.value

        def vacuum(spec=spec, kit=kit, boundary=boundary):
            report = match_spectrum(spec, BetheRootSet.vacuum(N, boundary, q), points, strict=False, kit=kit)
            details["spectra"].append(report.as_dict())
            return max(abs(report.kappa - expected_kappa[boundary]), report.mismatch), [report.kappa]

        run.check(f"vacuum {label}", vacuum, MATCH_TOLERANCE)

        for M in range(1, config.M_max + 1):
            if M > sector_limit(spec):
                logger.info(f"sector M={M} is truncated at D={spec.D} on the {label} chain; skipped")
                break
            accepted: List[BetheRootSet] = []

            def roots(M=M, boundary=boundary, accepted=accepted):
                accepted.extend(scan_root_sets(N, M, boundary, q))
                details["roots"].extend(r.as_dict() for r in accepted)
                if not accepted:
                    raise NoConvergence(f"no accepted {boundary.value} root set at M={M}")
                return max(r.residual for r in accepted)

            def spectrum(spec=spec, kit=kit, accepted=accepted):
                if not accepted:
                    raise NoEigenvalueWithin("no root sets to match")
                reports = [match_spectrum(spec, r, points, strict=False, kit=kit) for r in accepted]
                details["spectra"].extend(r.as_dict() for r in reports)
                worst = max(reports, key=lambda r: r.mismatch)
                return worst.mismatch, [worst.kappa]

            # beyond one magnon the continuation may miss states; a miss is reported, not failed
            run.check(f"bae {label} M={M}", roots, ROOT_TOLERANCE, informational=M > 1)
            run.check(f"spectrum {label} M={M}", spectrum, MATCH_TOLERANCE, informational=M > 1)

    def pole(shift: float):
        rootset = solve_bae(N, 1, Boundary.PERIODIC, (N - 1,), q)
        if shift:
            rootset = dataclasses.replace(rootset, roots=(rootset.roots[0] + shift,))
        return pole_residue(rootset, 0)

    run.check("pole cancellation", lambda: pole(0.0), 1e-6)
    run.check("pole cancellation off root", lambda: pole(0.01), 1e-4, control=True)

    periodic, open_ = config.spec.with_boundary(Boundary.PERIODIC), config.spec.with_boundary(Boundary.OPEN)

    def printed_periodic():
        rootset = solve_bae(N, 1, Boundary.PERIODIC, (0,), q, convention="printed")
        report = match_spectrum(periodic, rootset, points, strict=False)
        return report.mismatch, [report.kappa]

    def printed_open_vacuum():
        vacuum_set = BetheRootSet.vacuum(N, Boundary.OPEN, q, convention="printed")
        report = match_spectrum(open_, vacuum_set, points, strict=False)
        return max(abs(report.kappa - q ** -N), report.mismatch), [report.kappa]

    def printed_open():
        rootsets = scan_root_sets(N, 1, Boundary.OPEN, q, convention="printed", limit=1)
        if not rootsets:
            raise NoConvergence("no printed open root set at M=1")
        report = match_spectrum(open_, rootsets[0], points, strict=False)
        return report.mismatch, [report.kappa]

    run.check("printed spectrum periodic M=1", printed_periodic, MATCH_TOLERANCE, informational=True)
    run.check("printed vacuum open", printed_open_vacuum, MATCH_TOLERANCE, informational=True)
    run.check("printed spectrum open M=1", printed_open, MATCH_TOLERANCE, informational=True)

    window = min(config.M_max, N * (config.D - 1))
    left, right = _window_state(periodic, window, rng), _window_state(periodic, window, rng)

    def unitarity():
        values = evolve_series(periodic, identity(periodic), [0.0, 0.5, 1.3], left, right, window)
        return float(np.abs(values - np.vdot(left, right)).max())

    def derivative():
        H = LaxKit(periodic).hamiltonians().H_phys
        b1 = site_operator("b", 1, periodic)
        expected = -1j * np.vdot(left, (H @ b1 - b1 @ H) @ right)
        h = 1e-5
        forward = evolve_expectation(periodic, b1, h, left, right, window, H)
        backward = evolve_expectation(periodic, b1, -h, left, right, window, H)
        return abs((forward - backward) / (2 * h) - expected) / max(1.0, abs(expected))

    run.check("evolution unitarity", unitarity, 1e-12)
    run.check("evolution derivative", derivative, 1e-6)
    return SuiteResult("bethe", run.report, details)


def qstates_suite(config: RunConfig, observer: Observer = None) -> SuiteResult:
    run = SuiteRunner(None, observer)
    c = config.coherent
    details = {"q": c["q"], "z": c["z"], "w": c["w"], "D": c["D"]}

    def recursion():
        worst = 0.0
        for q in (c["q"], config.q):
            worst = max(worst, max(abs(q_number(n + 1, q) - q * q * q_number(n, q) - 1) for n in range(51)))
        return worst

    run.check("q-number recursion", recursion, 1e-12)
    run.check("rescaled algebra", lambda: algebra_residual(c["q"], c["D"]), 1e-12)

    states = []

    def truncation():
        states.extend([coherent_vector(c["z"], c["q"], c["D"]), coherent_vector(c["w"], c["q"], c["D"])])
        details["tails"] = [s.tail for s in states]
        return states[0].tail

    run.check("coherent truncation", truncation, 1e-8)
    if states:
        left, right = states
        run.check("coherent eigenvector", left.eigen_residual, max(left.tail, 1e-15))

        def overlap_check():
            value, expected = overlap(left, right), exp_q(np.conj(c["z"]) * c["w"], c["q"])
            details["overlap"], details["exp_q"] = value, expected
            return abs(value - expected)

        run.check("coherent overlap", overlap_check, left.tail + right.tail + 1e-14)
    return SuiteResult("qstates", run.report, details)


SUITE_FUNCTIONS: Dict[str, Callable[[RunConfig, Observer], SuiteResult]] = {
    "closed": closed_suite,
    "open": open_suite,
    "backlund": backlund_suite,
    "bethe": bethe_suite,
    "qstates": qstates_suite,
}


def _timed(name: str, config: RunConfig, observer: Observer = None) -> SuiteResult:
    start = time.perf_counter()
    result = SUITE_FUNCTIONS[name](config, observer)
    result.elapsed = time.perf_counter() - start
    logger.info(f"suite {name}: {'pass' if result.overall else 'FAIL'} in {result.elapsed:.2f}s")
    return result


@ray.remote
def _remote_suite(name: str, config: RunConfig) -> SuiteResult:
    return _timed(name, config)


# ---------------------------------------------------------------------------------------
# Report


def _number(x: float):
    if not math.isfinite(x):
        return str(x)
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def jsonable(value):
    """Plain JSON values; complex numbers become ``[re, im]``."""
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return _number(value)
    if isinstance(value, complex):
        return [_number(value.real), _number(value.imag)]
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _check_dict(check: CheckResult, deterministic: bool) -> Dict:
    return {
        "name": check.name,
        "residual": check.residual,
        "tolerance": check.tolerance,
        "passed": check.passed,
        "informational": check.informational,
        "control": check.control,
        "calibration": check.calibration or [],
        "message": check.message,
        "elapsed": 0.0 if deterministic else check.elapsed,
    }


def status(check: CheckResult) -> str:
    if check.control:
        return "CTRL" if not check.passed else "FAIL"
    if check.informational:
        return "INFO"
    return "PASS" if check.passed else "FAIL"


@dataclass
class RunReport:
    config: RunConfig
    suites: List[SuiteResult]
    elapsed: float = 0.0

    @property
    def overall(self) -> bool:
        return bool(self.suites) and all(s.overall and s.report.controls_detected for s in self.suites)

    def as_dict(self) -> Dict:
        deterministic = self.config.deterministic
        return jsonable(
            {
                "schema": SCHEMA,
                "config": self.config.as_dict(),
                "suites": {
                    s.name: {
                        "overall": s.overall,
                        "elapsed": 0.0 if deterministic else s.elapsed,
                        "checks": [_check_dict(c, deterministic) for c in s.report.checks],
                        "details": s.details,
                    }
                    for s in self.suites
                },
                "overall": self.overall,
                "elapsed": 0.0 if deterministic else self.elapsed,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def summary(self) -> List[str]:
        lines = []
        for s in self.suites:
            for c in s.report.checks:
                calibration = " ".join(f"{z:.6g}" for z in c.calibration or [])
                lines.append(
                    f"{s.name:9s} {c.name:52s} {c.residual:10.3e} {c.tolerance:8.1e} {status(c):4s} {calibration}".rstrip()
                )
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}")
        return lines


# ---------------------------------------------------------------------------------------
# Running


def _rejudge(result: SuiteResult, tolerances: Mapping[str, float]) -> None:
    checks = result.report.checks
    for i, check in enumerate(checks):
        if check.name in tolerances:
            checks[i] = dataclasses.replace(check, tolerance=tolerances[check.name])


def _execute(config: RunConfig, writer) -> List[SuiteResult]:
    def log(suite: str, check: CheckResult):
        writer.write.remote(check_row(suite, check))

    results: Dict[str, SuiteResult] = {}
    if config.jobs == 1 or len(config.suites) == 1:
        for name in config.suites:
            results[name] = _timed(name, config, partial(log, name) if writer is not None else None)
    else:
        pending = [_remote_suite.remote(name, config) for name in config.suites]
        while pending:
            done, pending = ray.wait(pending, num_returns=1)
            result = ray.get(done[0])
            results[result.name] = result
            if writer is not None:
                for check in result.report.checks:
                    log(result.name, check)
    return [results[name] for name in config.suites]


def write_golden(directory: str, suites: Sequence[SuiteResult]) -> List[Path]:
    """Write the serialized equation sets and the closed/open check lists."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    texts = dict(golden_texts())
    for s in suites:
        if s.name in ("closed", "open"):
            texts[f"{s.name}_checks.txt"] = "".join(f"{c.name}\n" for c in s.report.checks)
    written = []
    for name, text in sorted(texts.items()):
        path = root / name
        path.write_text(text)
        written.append(path)
    return written


def run(config: RunConfig) -> Tuple[RunReport, int]:
    """Execute the configured suites and write the report.

    Check failures never raise; they set the exit code to 1. A report or
    golden file that cannot be written gives exit code 3.
    """
    start = time.perf_counter()
    needs_ray = config.log_csv is not None or (config.jobs > 1 and len(config.suites) > 1)
    started = needs_ray and not ray.is_initialized()
    if started:
        ray.init(num_cpus=min(config.jobs, len(config.suites)))

    writer = get_check_logger(config.log_csv) if config.log_csv is not None else None
    try:
        results = _execute(config, writer)
    finally:
        if writer is not None:
            ray.get(writer.close.remote())
        if started:
            ray.shutdown()

    for result in results:
        _rejudge(result, config.tolerances)
    known = {c.name for r in results for c in r.report.checks}
    for name in config.tolerances:
        if name not in known:
            logger.warning(f"tolerance override for unknown check '{name}'")

    report = RunReport(config, results, time.perf_counter() - start)
    code = EXIT_OK if report.overall else EXIT_FAILED
    try:
        if config.output is not None:
            Path(config.output).write_text(report.to_json())
        if config.write_golden is not None:
            write_golden(config.write_golden, results)
    except OSError as error:
        logger.error(f"cannot write results: {error}")
        code = EXIT_IO
    return report, code


# ---------------------------------------------------------------------------------------
# Command line


VERB_SUITES = {
    "bethe": ("bethe",),
    "bt": ("backlund",),
    "qstates": ("qstates",),
    "all": None,
}


def _tolerance(text: str) -> Tuple[str, float]:
    name, sep, value = text.rpartition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got '{text}'")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: '{value}'") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON run configuration")
    common.add_argument("--N", type=int, default=None, help="chain length")
    common.add_argument("--D", type=int, default=None, help="local Fock cutoff")
    common.add_argument("--q-phase", type=float, default=None, help="phase of q (default 0.7)")
    common.add_argument("--q-modulus", type=float, default=None, help="modulus of q (default 1)")
    common.add_argument("--seed", type=int, default=None, help=f"random seed; {SEED_VARIABLE} overrides the file")
    common.add_argument("--output", type=str, default=None, help="write the JSON report here")
    common.add_argument("--jobs", type=int, default=None, help="parallel suites; 1 runs sequentially")
    common.add_argument("--deterministic", action="store_true", default=None, help="zero all timings")
    common.add_argument("--log-csv", type=str, default=None, help="stream check results to a CSV file")
    common.add_argument("--log-level", type=str, default="WARNING")
    common.add_argument(
        "--tolerance", type=_tolerance, action="append", default=None, metavar="NAME=VALUE",
        help="override the tolerance of a named check; repeatable",
    )

    golden = argparse.ArgumentParser(add_help=False)
    golden.add_argument(
        "--write-golden", type=str, default=None, metavar="DIR",
        help="write the equation sets and the closed/open check lists to DIR",
    )

    parser = argparse.ArgumentParser(prog="qlax", description="Verify q-oscillator lattice identities.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    check = verbs.add_parser("check", parents=[common, golden], help="closed and open chain identities")
    check.add_argument("--boundary", choices=[b.value for b in Boundary], default=None)
    bethe = verbs.add_parser("bethe", parents=[common], help="Bethe roots and spectrum matching")
    bethe.add_argument("--M", type=int, default=None, help="largest magnon number")
    verbs.add_parser("bt", parents=[common, golden], help="symbolic Backlund derivations")
    verbs.add_parser("qstates", parents=[common], help="q-exponential and coherent states")
    verbs.add_parser("all", parents=[common, golden], help="every suite")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    overrides = {
        "N": args.N,
        "D": args.D,
        "seed": args.seed,
        "output": args.output,
        "jobs": args.jobs,
        "deterministic": args.deterministic,
        "log_csv": args.log_csv,
        "M_max": getattr(args, "M", None),
        "write_golden": getattr(args, "write_golden", None),
    }
    if args.q_phase is not None or args.q_modulus is not None:
        overrides["q"] = {
            "modulus": 1.0 if args.q_modulus is None else args.q_modulus,
            "phase": float(np.angle(DEFAULT_Q)) if args.q_phase is None else args.q_phase,
        }
    if args.tolerance:
        overrides["tolerances"] = dict(args.tolerance)

    if args.verb == "check":
        boundary = getattr(args, "boundary", None)
        overrides["suites"] = ["open"] if boundary == "open" else ["closed"] if boundary else ["closed", "open"]
        if boundary:
            overrides["boundary"] = boundary
    elif VERB_SUITES[args.verb] is not None:
        overrides["suites"] = list(VERB_SUITES[args.verb])
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    try:
        config = parse_config(args.config, _overrides(args))
    except (ParseError, ValidationError) as error:
        print(f"[error] {error}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as error:
        print(f"[error] cannot read config: {error}", file=sys.stderr)
        return EXIT_IO

    report, code = run(config)
    for line in report.summary():
        print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
