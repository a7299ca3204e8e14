import numpy as np
import pytest


def test_q_numbers():
    from qlax.qstates import q_factorial, q_number

    assert q_factorial(0, 0.5) == 1
    assert np.isclose(q_number(2, 0.7 + 0.2j), 1 + (0.7 + 0.2j) ** 2)
    assert np.isclose(q_factorial(3, 0.5), 1.640625)


def test_q_number_recursion():
    from qlax.qstates import q_number

    rng = np.random.default_rng(11)
    for _ in range(10):
        q = rng.uniform(0.3, 0.95) * np.exp(1j * rng.uniform(0, np.pi / 2))
        for n in range(51):
            assert abs(q_number(n + 1, q) - q * q * q_number(n, q) - 1) < 1e-12


def test_degenerate_q():
    from qlax.exceptions import DegenerateQ
    from qlax.qstates import coherent_vector, exp_q, q_factorial

    with pytest.raises(DegenerateQ):
        q_factorial(3, 1.0)

    with pytest.raises(DegenerateQ):
        exp_q(0.1, -1.0)

    with pytest.raises(DegenerateQ):
        coherent_vector(0.1, 1.0, 5)


def test_exp_q():
    from qlax.exceptions import OutsideRadius, QStatesError
    from qlax.qstates import exp_q, exp_q_series

    assert exp_q(0, 0.6) == 1
    assert abs(exp_q(0.5, 0.999) - np.exp(0.5)) < 1e-2

    value, remainder = exp_q_series(0.5, 0.6, terms=10)
    assert abs(value - exp_q(0.5, 0.6, terms=80)) <= remainder

    with pytest.raises(OutsideRadius):
        exp_q(1 / (1 - 0.36) + 0.01, 0.6)

    with pytest.raises(QStatesError):
        exp_q(0.1, 0.6, terms=5)


def test_rescaled_algebra():
    from qlax.qstates import algebra_residual

    assert algebra_residual(0.6, 12) < 1e-14
    assert algebra_residual(0.8 * np.exp(0.3j), 12) < 1e-14


def test_coherent_eigenvector():
    from qlax.qstates import coherent_vector

    state = coherent_vector(0.3, 0.6, 25)
    assert state.tail < 1e-8
    assert state.eigen_residual() <= max(state.tail, 1e-15)
    assert state.eigen_residual(restrict=False) < 1e-8

    vacuum = coherent_vector(0.0, 0.6, 6)
    assert np.allclose(vacuum.amplitudes, np.eye(6)[0])


def test_coherent_tail_decreases():
    from qlax.qstates import coherent_vector

    tails = [coherent_vector(0.3 + 0.2j, 0.6, D).tail for D in range(3, 20)]
    assert all(later < earlier for earlier, later in zip(tails, tails[1:]))


def test_coherent_overlap():
    from qlax.qstates import coherent_vector, exp_q, overlap

    q, z, w = 0.6, 0.3, 0.2
    left, right = coherent_vector(z, q, 25), coherent_vector(w, q, 25)
    assert abs(overlap(left, right) - exp_q(np.conj(z) * w, q)) < left.tail + right.tail + 1e-14

    z, w = 0.3 + 0.1j, -0.2 + 0.25j
    forward = overlap(coherent_vector(z, q, 25), coherent_vector(w, q, 25))
    mirrored = overlap(coherent_vector(np.conj(w), q, 25), coherent_vector(np.conj(z), q, 25))
    assert abs(forward - mirrored) < 1e-12


def test_coherent_outside_radius():
    from qlax.exceptions import OutsideRadius
    from qlax.qstates import coherent_vector

    with pytest.raises(OutsideRadius):
        coherent_vector(1.5, 0.6, 10)
