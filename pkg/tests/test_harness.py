import csv
import json
import os

import numpy as np
import pytest


def _write(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, "wt") as f:
        f.write(text)
    return path


def test_defaults(tmpdirname):
    from qlax.fockspace import DEFAULT_Q
    from qlax.harness import SUITES, parse_config

    config = parse_config(_write(tmpdirname, "empty.json", ""))
    assert (config.N, config.D, config.seed) == (3, 5, 42)
    assert config.q == DEFAULT_Q
    assert config.suites == SUITES
    assert config.spec.boundary.value == "periodic"


def test_flag_precedence(tmpdirname):
    from qlax.harness import parse_config

    path = _write(tmpdirname, "n3.json", json.dumps({"N": 3, "seed": 5}))
    assert parse_config(path).N == 3
    assert parse_config(path, {"N": 4, "D": None}).N == 4

    # the environment beats the file, flags beat the environment
    assert parse_config(path, environ={"QLAX_SEED": "9"}).seed == 9
    assert parse_config(path, {"seed": 11}, environ={"QLAX_SEED": "9"}).seed == 11


def test_q_forms():
    from qlax.harness import parse_config

    q = parse_config(overrides={"q": 0.7}).q
    assert np.isclose(abs(q), 1.0)
    assert np.isclose(q, np.exp(0.7j))

    q = parse_config(overrides={"q": {"modulus": 0.9, "phase": 0.4}}).q
    assert np.isclose(q, 0.9 * np.exp(0.4j))

    config = parse_config(overrides={"q": {"re": 0.6, "im": 0.3}})
    assert config.q == complex(0.6, 0.3)
    assert config.as_dict()["q"]["modulus"] == pytest.approx(abs(complex(0.6, 0.3)))


def test_validation_paths():
    from qlax.exceptions import ValidationError
    from qlax.harness import parse_config

    cases = [
        ({"Nx": 3}, "Nx"),
        ({"N": 0}, "N"),
        ({"suites": ["closed", "bogus"]}, "suites[1]"),
        ({"q": {"modulus": 1.0, "angle": 0.3}}, "q.angle"),
        ({"coherent": {"z": "big"}}, "coherent.z"),
        ({"tolerances": {"rll": -1.0}}, "tolerances.rll"),
        ({"q": 0.0}, "spec"),
    ]
    for overrides, path in cases:
        with pytest.raises(ValidationError) as error:
            parse_config(overrides=overrides)
        assert error.value.path == path


def test_parse_errors(tmpdirname):
    from qlax.exceptions import ParseError, ValidationError
    from qlax.harness import parse_config

    with pytest.raises(ParseError):
        parse_config(_write(tmpdirname, "broken.json", '{"N": 3,'))

    with pytest.raises(ValidationError):
        parse_config(_write(tmpdirname, "list.json", "[1, 2]"))

    with pytest.raises(ValidationError):
        parse_config(environ={"QLAX_SEED": "many"})


def test_main_exit_codes(tmpdirname):
    from qlax.harness import EXIT_CONFIG, EXIT_IO, main

    broken = _write(tmpdirname, "corrupt.json", "{not json")
    assert main(["qstates", "--config", broken]) == EXIT_CONFIG
    assert main(["qstates", "--config", os.path.join(tmpdirname, "missing.json")]) == EXIT_IO
    assert main(["qstates", "--N", "0"]) == EXIT_CONFIG


def test_qstates_run(tmpdirname, capsys):
    from qlax.harness import EXIT_OK, SCHEMA, main

    output = os.path.join(tmpdirname, "qstates.json")
    assert main(["qstates", "--output", output, "--jobs", "1"]) == EXIT_OK

    with open(output) as f:
        report = json.load(f)
    assert report["schema"] == SCHEMA
    assert report["overall"]
    assert list(report["suites"]) == ["qstates"]
    names = [c["name"] for c in report["suites"]["qstates"]["checks"]]
    assert "coherent overlap" in names

    printed = capsys.readouterr().out.splitlines()
    assert printed[-1] == "overall: PASS"
    assert any("PASS" in line and "coherent eigenvector" in line for line in printed)


def test_tolerance_override(tmpdirname):
    from qlax.harness import EXIT_FAILED, parse_config, run

    config = parse_config(overrides={"suites": ["qstates"], "jobs": 1, "tolerances": {"coherent truncation": 1e-300}})
    report, code = run(config)
    assert code == EXIT_FAILED
    check = report.suites[0].report["coherent truncation"]
    assert check.tolerance == 1e-300 and not check.passed


def test_bt_run_and_golden(tmpdirname):
    from qlax.freealg import golden_texts
    from qlax.harness import EXIT_OK, main

    directory = os.path.join(tmpdirname, "golden")
    assert main(["bt", "--write-golden", directory, "--jobs", "1"]) == EXIT_OK
    for name, text in golden_texts().items():
        with open(os.path.join(directory, name)) as f:
            assert f.read() == text


@pytest.mark.parametrize("suite", ["closed", "open"])
def test_check_list_golden(suite):
    from pathlib import Path

    from qlax.harness import SUITE_FUNCTIONS, parse_config

    path = Path(__file__).parent / "golden" / f"{suite}_checks.txt"
    assert path.exists(), f"missing {path}; regenerate with `qlax check --write-golden tests/golden`"

    result = SUITE_FUNCTIONS[suite](parse_config(overrides={"samples": 2, "jobs": 1}))
    assert [c.name for c in result.report.checks] == path.read_text().splitlines()
    assert result.overall, [c.name for c in result.report.failed()]


def test_bethe_report_has_kappa(tmpdirname):
    from qlax.harness import parse_config, run

    config = parse_config(overrides={"suites": ["bethe"], "N": 3, "D": 4, "M_max": 2, "jobs": 1})
    report, code = run(config)
    bethe = report.suites[0]
    assert bethe.report["spectrum periodic M=1"].passed
    assert bethe.report["spectrum open M=1"].passed
    assert bethe.report["pole cancellation"].passed
    assert not bethe.report["pole cancellation off root"].passed

    spectra = report.as_dict()["suites"]["bethe"]["details"]["spectra"]
    assert spectra
    kappa = complex(*spectra[0]["kappa"])
    assert np.isclose(kappa, config.q ** -1.5)
    assert {s["M"] for s in spectra} >= {0, 1}


def test_deterministic_report(tmpdirname):
    from qlax.harness import main

    first, second = os.path.join(tmpdirname, "a.json"), os.path.join(tmpdirname, "b.json")
    for output in (first, second):
        main(["qstates", "--deterministic", "--seed", "3", "--output", output])
    with open(first) as a, open(second) as b:
        assert a.read() == b.read()


def test_check_log(ray_init, tmpdirname):
    from qlax.actors import CHECK_LOG_COLUMNS
    from qlax.harness import parse_config, run

    path = os.path.join(tmpdirname, "checks.csv")
    config = parse_config(overrides={"suites": ["qstates", "backlund"], "jobs": 2, "log_csv": path})
    report, _ = run(config)

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CHECK_LOG_COLUMNS
    assert len(rows) - 1 == sum(len(s.report.checks) for s in report.suites)
    assert {row[0] for row in rows[1:]} == {"qstates", "backlund"}


def test_random_words_cover_length_and_tilde():
    from qlax.harness import MAX_WORD_LENGTH, random_word

    rng = np.random.default_rng(0)
    words = [random_word(rng).words()[0] for _ in range(400)]
    assert {len(w) for w in words} == set(range(1, MAX_WORD_LENGTH + 1))
    assert any(w[0].tilde for w in words)
    assert any(not w[0].tilde for w in words)
    assert any(len(w) > 1 and w[0].tilde == w[1].tilde for w in words)


def test_jsonable():
    from qlax.harness import jsonable

    assert jsonable(1 / 3) == 0.333333333333
    assert jsonable(np.complex128(1 + 2j)) == [1.0, 2.0]
    assert jsonable({"x": np.array([np.inf])}) == {"x": ["inf"]}
    with pytest.raises(TypeError):
        jsonable(object())
