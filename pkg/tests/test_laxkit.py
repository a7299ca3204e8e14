import cmath

import numpy as np
import pytest


@pytest.fixture(scope="module")
def closed_kit():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import LaxKit

    return LaxKit(ChainSpec(N=3, D=5))


@pytest.fixture(scope="module")
def open_kit():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import LaxKit

    return LaxKit(ChainSpec(N=3, D=5, boundary="open"))


def _points(count, seed=0):
    from qlax.laxkit import sample_points

    return sample_points(np.random.default_rng(seed), count)


def test_build_L_coefficients():
    from qlax.fockspace import ChainSpec, site_operator
    from qlax.laxkit import build_L

    spec = ChainSpec(N=2, D=3)
    L = build_L(spec, 2)
    v = site_operator("v", 2, spec)
    assert abs(L.entry(0, 0)[(1, 0)] - v).max() == 0
    assert (0, 0) not in L.entry(0, 0)
    assert abs(L.entry(1, 1)[(-1, 0)] + v).max() == 0
    assert L.u_degrees() == (-1, 0, 1)


def test_build_L_smallest_chain():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import build_L

    spec = ChainSpec(N=1, D=2)
    a = build_L(spec, 1).entry(1, 0)[(0, 0)].toarray()
    assert np.allclose(a, [[0, 1 - spec.q ** -2], [0, 0]])


def test_build_L_rejects_bad_site():
    from qlax.exceptions import SiteOutOfRange
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import build_L

    with pytest.raises(SiteOutOfRange):
        build_L(ChainSpec(N=2, D=3), 3)


def test_hat_L_is_the_inverse():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import OperatorLaurentMatrix, LaxKit, matrix_residual

    spec = ChainSpec(N=1, D=5)
    kit = LaxKit(spec)
    one = OperatorLaurentMatrix.identity(spec).evaluate(1.0)
    for u in (1.0, cmath.exp(0.4j), 1.7 * cmath.exp(-1.1j)):
        product = kit.hat_L(1).evaluate(u) @ kit.L(1).evaluate(1 / u)
        assert matrix_residual(product, one, 1) < 1e-10
        product = kit.L(1).evaluate(1 / u) @ kit.hat_L(1).evaluate(u)
        assert matrix_residual(product, one, 1) < 1e-10


def test_hat_L_entries():
    from qlax.fockspace import ChainSpec, site_operator
    from qlax.laxkit import build_hat_L

    spec = ChainSpec(N=1, D=4)
    q, v = spec.q, site_operator("v", 1, spec)
    hat = build_hat_L(spec, 1)
    assert abs(hat.entry(0, 0)[(1, 0)] - q * v).max() < 1e-15
    assert abs(hat.entry(1, 1)[(-1, 0)] + v / q).max() < 1e-15
    assert abs(hat.entry(0, 1)[(0, 0)] - site_operator("a_dag", 1, spec)).max() < 1e-15


def test_literal_crossing_differs_by_sigma_z():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import build_hat_L, matrix_residual

    spec = ChainSpec(N=1, D=4)
    literal = build_hat_L(spec, 1, crossing="literal")
    inverse = build_hat_L(spec, 1, crossing="inverse")
    sigma_z = np.diag([1.0, -1.0])
    assert matrix_residual(literal, -inverse.conjugate(sigma_z), 0) < 1e-15

    with pytest.raises(ValueError):
        build_hat_L(spec, 1, crossing="sideways")


def test_R_matrix_entries():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import build_R

    spec = ChainSpec()
    q = spec.q
    R = build_R(spec)
    x = cmath.exp(0.3j)
    at = R.at(x, 1.0, q)
    assert np.isclose(at[0, 0], q * x - 1 / (q * x))
    assert np.isclose(at[1, 2], q - 1 / q)
    assert np.isclose(R.at(1.0, 1.0, q)[1, 1], 0)

    summed = build_R(spec, "sum").at(x, x, q)
    assert np.isclose(summed[3, 3], q * x ** 2 - 1 / (q * x ** 2))


def test_R_matrices_commute():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import build_R

    spec = ChainSpec()
    R = build_R(spec)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x1, x2 = np.exp(1j * rng.uniform(0, 2 * np.pi, size=2))
        A, B = R.at(x1, 1.0, spec.q), R.at(x2, 1.0, spec.q)
        assert abs(A @ B - B @ A).max() < 1e-12


def test_monodromy():
    from qlax.exceptions import BadRange
    from qlax.fockspace import ChainSpec, site_operator
    from qlax.laxkit import LaxKit, OperatorLaurentMatrix, build_L, matrix_residual

    spec = ChainSpec(N=2, D=3)
    kit = LaxKit(spec)
    assert matrix_residual(kit.monodromy(0, 1), OperatorLaurentMatrix.identity(spec), 0) == 0

    top = kit.monodromy(2, 1).entry(0, 0)[(2, 0)]
    expected = site_operator("v", 2, spec) @ site_operator("v", 1, spec)
    assert abs(top - expected).max() < 1e-15

    with pytest.raises(BadRange):
        kit.monodromy(0, 2)

    one_site = ChainSpec(N=1, D=3)
    assert matrix_residual(LaxKit(one_site).monodromy(1, 1), build_L(one_site, 1), 0) == 0


def test_single_site_transfer():
    from qlax.fockspace import ChainSpec, site_operator
    from qlax.laxkit import transfer

    spec = ChainSpec(N=1, D=3)
    t = transfer(spec).entry(0, 0)
    v = site_operator("v", 1, spec)
    assert set(t) == {(1, 0), (-1, 0)}
    assert abs(t[(1, 0)] - v).max() == 0
    assert abs(t[(-1, 0)] + v).max() == 0


def test_vacuum_eigenvalue(closed_kit):
    from qlax.fockspace import vacuum

    spec = closed_kit.spec
    q, N = spec.q, spec.N
    omega = vacuum(spec)
    for u in (cmath.exp(0.2j), 1.3 * cmath.exp(2.0j)):
        image = closed_kit.transfer((u, 1.0)).operator() @ omega
        expected = q ** (-N / 2) * (u ** N + (-1) ** N * u ** -N)
        assert np.allclose(image, expected * omega)


@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_transfer_matrices_commute_on_sectors(boundary):
    from qlax.fockspace import ChainSpec, sector_basis
    from qlax.laxkit import LaxKit

    spec = ChainSpec(N=3, D=5, boundary=boundary)
    kit = LaxKit(spec)
    (u1, _), (u2, _) = _points(2, seed=4)
    t1 = kit.transfer((u1, 1.0)).operator()
    t2 = kit.transfer((u2, 1.0)).operator()
    for M in range(4):
        basis = sector_basis(spec, M)
        assert basis.leakage(t1) < 1e-10
        x, y = basis.restrict(t1), basis.restrict(t2)
        assert abs(x @ y - y @ x).max() < 1e-10


def test_rll_coefficientwise():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import LaxKit, matrix_residual

    kit = LaxKit(ChainSpec(N=1, D=5))
    La, Lb, R = kit.L(1).lift("a"), kit.L_b(1).lift("b"), kit.R()
    assert matrix_residual(R @ La @ Lb, Lb @ La @ R, 2) < 1e-10


def test_rll_sampled(closed_kit):
    from qlax.laxkit import matrix_residual

    for point in _points(3, seed=5):
        for n in (1, 3):
            La = closed_kit.L(n, point).lift("a")
            Lb = closed_kit.L_b(n, point).lift("b")
            R = closed_kit.R(point=point)
            assert matrix_residual(R @ La @ Lb, Lb @ La @ R, 2) < 1e-10


def test_closed_hamiltonians(closed_kit):
    from qlax.fockspace import safe_residual
    from qlax.laxkit import closed_form_hamiltonians

    spec = closed_kit.spec
    H = closed_kit.hamiltonians()
    expected = closed_form_hamiltonians(spec)
    assert H.top_power == spec.N
    assert (abs(H.H_plus1).max() if H.H_plus1.nnz else 0.0) < 1e-13
    for name in ("H_plus0", "H_minus0", "H_plus2", "H_minus2", "H_plus", "H_minus", "H_phys"):
        assert safe_residual(getattr(H, name), expected[name], 2, spec) < 1e-10, name


def test_two_site_hamiltonian():
    from qlax.fockspace import ChainSpec, safe_residual, site_operator
    from qlax.laxkit import extract_hamiltonians

    spec = ChainSpec(N=2, D=5)
    H = extract_hamiltonians(spec).H_plus
    b1, b2 = site_operator("b", 1, spec), site_operator("b", 2, spec)
    bd1, bd2 = site_operator("b_dag", 1, spec), site_operator("b_dag", 2, spec)
    assert safe_residual(H, bd2 @ b1 + bd1 @ b2, 2, spec) < 1e-10


def test_open_hamiltonians(open_kit):
    from qlax.fockspace import safe_residual
    from qlax.laxkit import closed_form_hamiltonians

    spec = open_kit.spec
    H = open_kit.hamiltonians()
    expected = closed_form_hamiltonians(spec)
    assert H.top_power == 2 * spec.N
    for name in ("H_plus0", "H_minus0", "H_plus", "H_minus"):
        assert safe_residual(getattr(H, name), expected[name], 2, spec) < 1e-10, name
    assert safe_residual(H.H_minus, spec.q ** 2 * H.H_plus, 2, spec) < 1e-10


def test_single_site_generator_by_hand():
    from qlax.coeffring import alpha, beta, lp_eval, U, W
    from qlax.fockspace import ChainSpec, site_operator
    from qlax.laxkit import LaxKit, OperatorLaurentMatrix, matrix_residual

    spec = ChainSpec(N=1, D=4)
    q = spec.q
    u, w = cmath.exp(0.5j), cmath.exp(-1.2j)
    x = U * W ** -1
    a_ = lp_eval(alpha(x), {"u": u, "w": w, "q": q})
    b_ = lp_eval(beta(x), {"u": u, "w": w, "q": q})
    g = q - 1 / q
    v = site_operator("v", 1, spec)
    expected = OperatorLaurentMatrix(
        spec,
        2,
        2,
        {
            (0, 0): {(0, 0): (a_ * u - b_ / u) * v},
            (0, 1): {(0, 0): g * site_operator("a_dag", 1, spec)},
            (1, 0): {(0, 0): g * site_operator("a", 1, spec)},
            (1, 1): {(0, 0): (b_ * u - a_ / u) * v},
        },
    )
    got = LaxKit(spec).generator_B(1, point=(u, w))
    assert matrix_residual(got, expected, 0) < 1e-12


def test_generator_bad_site(closed_kit):
    from qlax.exceptions import BadRange

    with pytest.raises(BadRange):
        closed_kit.generator_B(5)


def test_closed_intertwining(closed_kit):
    from qlax.laxkit import matrix_residual

    N = closed_kit.spec.N
    for point in _points(2, seed=6):
        t = closed_kit.transfer(point).times_identity(2)
        for n in range(1, N + 1):
            Lb = closed_kit.L_b(n, point)
            A_next = closed_kit.generator_A(n + 1, point=point)
            A_here = closed_kit.generator_A(n, point=point)
            assert matrix_residual(t.commutator(Lb), A_next @ Lb - Lb @ A_here, 2) < 1e-9

            B_next = closed_kit.generator_B(n + 1, point=point)
            B_here = closed_kit.generator_B(n, point=point)
            assert matrix_residual(B_next @ Lb, Lb @ B_here, 2) < 1e-10
            assert matrix_residual(B_next @ B_next @ Lb, Lb @ B_here @ B_here, 3) < 1e-10


def test_generator_split(closed_kit):
    from qlax.laxkit import matrix_residual

    point = _points(1, seed=7)[0]
    t = closed_kit.transfer(point).times_identity(2)
    A, B = closed_kit.generator_A(2, point=point), closed_kit.generator_B(2, point=point)
    assert matrix_residual(A + B, t, 0) < 1e-13


def test_cyclic_generator(closed_kit):
    from qlax.laxkit import matrix_residual

    point = _points(1, seed=8)[0]
    N = closed_kit.spec.N
    B_first = closed_kit.generator_B(1, point=point)
    B_last = closed_kit.generator_B(N + 1, point=point)
    assert matrix_residual(B_first, B_last, 0) < 1e-12


def test_closed_B_expansion(closed_kit):
    from qlax.laxkit import closed_form_library, fit_calibration, matrix_residual

    spec = closed_kit.spec
    for n in (1, 2):
        expansion = closed_kit.closed_B_expansion(n)
        library = closed_form_library(spec, n)
        assert matrix_residual(expansion["B_plus1"], expansion["B_plus1"] * 0, 0) < 1e-12
        assert matrix_residual(expansion["B_plus"], library["B_plus"], 2) < 1e-10
        assert matrix_residual(expansion["B_minus"], library["B_minus"], 2) < 1e-10
        assert matrix_residual(expansion["B_plus0"], library["B_plus0"], 0) < 1e-12
        assert matrix_residual(expansion["B_plus2"], library["B_plus2"], 2) < 1e-10

        # the printed B(-,0) and B(-,2) share one sign relative to the construction
        coeffs, residual = fit_calibration(expansion["B_minus0"], [library["B_minus0"]], 0)
        assert np.isclose(coeffs[0], (-1) ** (spec.N + 1))
        assert residual < 1e-12


def test_lax_matrices_match_closed_forms(closed_kit):
    from qlax.laxkit import closed_form_library, fit_calibration, matrix_residual

    spec = closed_kit.spec
    library = closed_form_library(spec, 2)
    assert np.isclose(library["A_plus"].entry(0, 0)[(0, 2)].diagonal()[0], spec.q ** -2 - 1)

    coeffs, residual = fit_calibration(closed_kit.lax_A_plus(2), [library["A_plus"]], 2)
    assert np.isclose(coeffs[0], 1.0) and residual < 1e-9
    coeffs, residual = fit_calibration(closed_kit.lax_A_minus(2), [library["A_minus"]], 2)
    assert np.isclose(coeffs[0], 1.0) and residual < 1e-9

    _, residual = fit_calibration(closed_kit.lax_A_minus(2), [library["A_minus_printed"]], 2)
    assert residual > 1e-3


def test_equations_of_motion(closed_kit):
    from qlax.fockspace import safe_residual, site_operator
    from qlax.laxkit import closed_form_eoms

    spec = closed_kit.spec
    H = closed_kit.hamiltonians().H_phys
    for n in range(1, spec.N + 1):
        expected = closed_form_eoms(spec, n)
        for name, field in (("b_dot", "b"), ("b_dag_dot", "b_dag"), ("v_dot", "v")):
            x = site_operator(field, n, spec)
            assert safe_residual(H @ x - x @ H, expected[name], 2, spec) < 1e-10, (n, name)
        v = site_operator("v", n, spec)
        assert safe_residual(H @ v - v @ H, expected["v_dot_printed"], 2, spec) > 1e-4


def test_open_boundary_forms(open_kit):
    from qlax.laxkit import closed_form_library, fit_calibration, matrix_residual

    spec = open_kit.spec
    library = closed_form_library(spec, 1)
    expansion = open_kit.open_B_expansion(1)
    assert matrix_residual(expansion["B_plus0"], library["B_plus0_1"], 0) < 1e-12
    assert matrix_residual(expansion["B_plus2"], library["B_plus2_1"], 2) < 1e-10
    assert matrix_residual(expansion["B_plus"], library["B_plus_1"], 2) < 1e-10

    coeffs, residual = fit_calibration(open_kit.open_boundary_A(), [library["A_1"]], 2)
    assert np.isclose(coeffs[0], 1.0) and residual < 1e-9

    diagonal = library["A_1"].entry(1, 1)[(0, 2)].diagonal()
    assert np.allclose(diagonal, spec.q)


def test_open_boundary_equations_of_motion(open_kit):
    from qlax.fockspace import safe_residual, site_operator
    from qlax.laxkit import closed_form_eoms

    spec = open_kit.spec
    H = open_kit.hamiltonians().H_phys
    expected = closed_form_eoms(spec, 1)
    for name, field in (("v_dot", "v"), ("b_dot", "b"), ("b_dag_dot", "b_dag")):
        x = site_operator(field, 1, spec)
        assert safe_residual(H @ x - x @ H, expected[name], 2, spec) < 1e-10, name


def test_open_intertwining(open_kit):
    from qlax.laxkit import matrix_residual

    for point in _points(2, seed=9):
        t = open_kit.transfer(point).times_identity(2)
        Lb = open_kit.L_b(2, point)
        rhs = open_kit.generator_A(3, "open", point) @ Lb - Lb @ open_kit.generator_A(2, "open", point)
        assert matrix_residual(t.commutator(Lb), rhs, 3) < 1e-9

        hat = open_kit.L_b(2, point, hatted=True)
        rhs = open_kit.generator_A(2, "hatted", point) @ hat - hat @ open_kit.generator_A(3, "hatted", point)
        assert matrix_residual(t.commutator(hat), rhs, 3) < 1e-9


def test_boundary_generators_agree(open_kit):
    from qlax.laxkit import matrix_residual

    for point in _points(2, seed=10):
        A = open_kit.generator_A(1, "open", point)
        A_hat = open_kit.generator_A(1, "hatted", point)
        assert matrix_residual(A, A_hat, 2) < 1e-10


def test_leading_inverse_rejects_non_diagonal():
    import scipy.sparse as sp

    from qlax.exceptions import NonInvertibleLeading
    from qlax.laxkit import leading_inverse

    with pytest.raises(NonInvertibleLeading):
        leading_inverse(sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])))
    with pytest.raises(NonInvertibleLeading):
        leading_inverse(sp.csr_matrix(np.diag([1.0, 0.0])))
    assert np.allclose(leading_inverse(sp.csr_matrix(np.diag([2.0, 4.0]))).diagonal(), [0.5, 0.25])


def test_perturbed_lax_breaks_rll():
    from qlax.fockspace import ChainSpec
    from qlax.laxkit import LaxKit, Perturbation, matrix_residual

    kit = LaxKit(ChainSpec(N=1, D=5), perturbation=Perturbation())
    La, Lb, R = kit.L(1).lift("a"), kit.L_b(1).lift("b"), kit.R()
    assert matrix_residual(R @ La @ Lb, Lb @ La @ R, 2) > 1e-5
