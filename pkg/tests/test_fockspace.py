import cmath

import numpy as np
import pytest


def _random_admissible_q(rng):
    from qlax.coeffring import is_admissible_q

    while True:
        q = rng.uniform(0.7, 1.3) * cmath.exp(1j * rng.uniform(0.2, 3.0))
        if is_admissible_q(q, 8):
            return q


def test_invalid_specs():
    from qlax.exceptions import InvalidSpec
    from qlax.fockspace import ChainSpec

    with pytest.raises(InvalidSpec):
        ChainSpec(D=1)
    with pytest.raises(InvalidSpec):
        ChainSpec(N=0)
    with pytest.raises(InvalidSpec):
        ChainSpec(q=1j)  # q^4 = 1
    with pytest.raises(InvalidSpec):
        ChainSpec(q=-1)
    with pytest.raises(InvalidSpec):
        ChainSpec(boundary="twisted")


def test_vacuum_eigenvalue():
    from qlax.fockspace import ChainSpec, site_operators

    spec = ChainSpec(N=1, D=5)
    v = site_operators(spec).v.toarray()
    assert np.isclose(v[0, 0], spec.q ** -0.5)


def test_lowering_coefficient():
    from qlax.fockspace import ChainSpec, site_operators

    ops = site_operators(ChainSpec(N=1, D=6, q=2.0))
    assert np.isclose(ops.a.toarray()[0, 1], 0.75)


def test_local_algebra_and_casimirs():
    from qlax.fockspace import ChainSpec, identity, safe_residual, site_operators

    rng = np.random.default_rng(0)
    for D in (3, 4, 5, 6):
        for _ in range(10):
            spec = ChainSpec(N=1, D=D, q=_random_admissible_q(rng))
            q = spec.q
            o = site_operators(spec)
            one = identity(spec)

            assert safe_residual(o.b @ o.b_dag - o.b_dag @ o.b, (q - 1 / q) * o.v_inv @ o.v_inv, 1, spec) < 1e-12
            assert safe_residual(o.v @ o.b, q * o.b @ o.v, 0, spec) < 1e-12
            assert safe_residual(o.v @ o.b_dag, o.b_dag @ o.v / q, 1, spec) < 1e-12
            assert safe_residual(o.v @ o.v_inv, one, 0, spec) == 0
            assert safe_residual(o.a_dag @ o.a + q * o.v @ o.v, one, 1, spec) < 1e-12
            assert safe_residual(o.a @ o.a_dag + o.v @ o.v / q, one, 1, spec) < 1e-12


def test_casimir_fails_only_at_the_cutoff():
    from qlax.fockspace import ChainSpec, identity, safe_residual, site_operators

    spec = ChainSpec(N=1, D=5)
    o = site_operators(spec)
    lhs = o.a @ o.a_dag + o.v @ o.v / spec.q
    assert safe_residual(lhs, identity(spec), 1, spec) < 1e-12
    assert safe_residual(lhs, identity(spec), 0, spec) > 1e-3


def test_embed():
    from qlax.exceptions import SiteOutOfRange
    from qlax.fockspace import ChainSpec, embed, identity, site_operators

    spec = ChainSpec(N=2, D=3)
    o = site_operators(spec)
    assert (embed(np.eye(3), 2, spec) != identity(spec)).nnz == 0

    x, y = embed(o.a, 1, spec), embed(o.a_dag, 2, spec)
    assert abs(x @ y - y @ x).max() == 0

    with pytest.raises(SiteOutOfRange):
        embed(o.a, 3, spec)


def test_embed_diagonal_ordering():
    from qlax.fockspace import ChainSpec, embed, site_operators

    spec = ChainSpec(N=2, D=2)
    q = spec.q
    v = site_operators(spec).v
    prod = (embed(v, 1, spec) @ embed(v, 2, spec)).diagonal()
    # index = m1 + 2*m2, so the order is (m2, m1) = (0,0), (0,1), (1,0), (1,1)
    assert np.allclose(prod, [q ** -1, q ** -2, q ** -2, q ** -3])


def test_embed_respects_products():
    from qlax.fockspace import ChainSpec, embed, site_operators

    spec = ChainSpec(N=3, D=3)
    o = site_operators(spec)
    for n in (1, 2, 3):
        lhs = embed(o.b @ o.a_dag, n, spec)
        rhs = embed(o.b, n, spec) @ embed(o.a_dag, n, spec)
        assert abs(lhs - rhs).max() == 0


def test_safe_residual_shapes():
    from qlax.exceptions import DimensionMismatch
    from qlax.fockspace import ChainSpec, safe_residual

    spec = ChainSpec(N=1, D=3)
    with pytest.raises(DimensionMismatch):
        safe_residual(np.eye(3), np.eye(2), 0, spec)
    assert safe_residual(np.eye(3), np.eye(3), 0, spec) == 0


def test_sector_basis():
    from qlax.fockspace import ChainSpec, sector_basis

    assert sector_basis(ChainSpec(N=2, D=3), 0).states == ((0, 0),)
    assert sector_basis(ChainSpec(N=2, D=3), 1).states == ((0, 1), (1, 0))
    basis = sector_basis(ChainSpec(N=3, D=4), 2)
    assert len(basis) == 6
    for state, index in zip(basis.states, basis.chain_indices):
        assert index == state[0] + 4 * state[1] + 16 * state[2]
        assert basis.index_map[index] == basis.states.index(state)


def test_hopping_conserves_sectors():
    from qlax.fockspace import ChainSpec, sector_basis, site_operator

    spec = ChainSpec(N=3, D=4)
    hop = site_operator("b_dag", 2, spec) @ site_operator("b", 1, spec)
    hop = hop + site_operator("a", 3, spec) @ site_operator("a_dag", 1, spec)
    for M in range(4):
        assert sector_basis(spec, M).leakage(hop) < 1e-12
