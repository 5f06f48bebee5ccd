import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mudich.errors import HorizonError, NonFiniteError, SingularRestrictionError
from mudich.growth import polynomial
from mudich.system import (EvolutionFamily, NormFamily, OperatorSequence, ProjectionFamily,
                           check_invariance, diagonal_power, kernel_basis, sparse_spike,
                           switched_power, table_operators)


def const(a, invertible=True, horizon=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return EvolutionFamily(OperatorSequence(a.shape[0], lambda n: a, invertible, horizon))


def random_family(seed, dim=3, horizon=None):
    rng = np.random.default_rng(seed)
    mats = {}

    def gen(n):
        if n not in mats:
            mats[n] = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
        return mats[n]

    return EvolutionFamily(OperatorSequence(dim, gen, True, horizon)), gen


def conditioned_family(seed, dim=3):
    # rotations times mild scalings keep cond(Phi(m, k)) below exp(0.1 (m - k))
    rng = np.random.default_rng(seed)
    mats = {}

    def gen(n):
        if n not in mats:
            q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            mats[n] = q @ np.diag(np.exp(rng.uniform(-0.05, 0.05, dim)))
        return mats[n]

    return EvolutionFamily(OperatorSequence(dim, gen, True))


def brute_product(gen, m, k, dim):
    out = np.eye(dim)
    for j in range(k, m):
        out = gen(j) @ out
    return out


def test_transition_examples():
    fam = const(2.0)
    assert fam.transition(7, 7).tolist() == [[1.0]]
    assert fam.transition(5, 2)[0, 0] == 8.0
    spike = EvolutionFamily(sparse_spike())
    for n in range(1, 12):
        assert spike.transition(2 ** n, 2 ** (n - 1))[0, 0] == 0.0


def test_transition_matches_brute_force_product():
    fam, gen = random_family(3)
    for m, k in [(2, 1), (9, 3), (33, 1), (64, 17), (100, 99)]:
        np.testing.assert_allclose(fam.transition(m, k), brute_product(gen, m, k, 3),
                                   rtol=1e-10, atol=1e-12)


def test_transition_read_only_and_cached():
    fam = const([[1.0, 1.0], [0.0, 1.0]])
    t = fam.transition(10, 3)
    assert t is fam.transition(10, 3)
    with pytest.raises(ValueError):
        t[0, 0] = 5.0


@pytest.mark.filterwarnings("ignore:overflow")
def test_transition_errors():
    fam = const(2.0, horizon=20)
    with pytest.raises(HorizonError):
        fam.transition(25, 1)
    with pytest.raises(ValueError):
        fam.transition(2, 5)
    big = const(1e200)
    with pytest.raises(NonFiniteError, match=r"\(3, 1\)|3"):
        big.transition(3, 1)


def test_backward_examples():
    fam = const(2.0)
    assert fam.backward_transition(2, 5)[0, 0] == pytest.approx(1 / 8)
    np.testing.assert_array_equal(fam.backward_transition(4, 4), [[1.0]])
    diag = const(np.diag([0.5, 3.0]))
    proj = ProjectionFamily.coordinate(2, [0])
    b = diag.backward_transition(1, 3, restriction=proj)
    np.testing.assert_allclose(b, np.diag([0.0, 1 / 9]), atol=1e-15)
    np.testing.assert_array_equal(diag.backward_transition(2, 2, restriction=proj),
                                  np.diag([0.0, 1.0]))


def test_backward_needs_invertibility_or_restriction():
    spike = EvolutionFamily(sparse_spike())
    with pytest.raises(SingularRestrictionError, match="not invertible"):
        spike.backward_transition(1, 4)
    with pytest.raises(SingularRestrictionError):
        spike.backward_transition(1, 4, restriction=ProjectionFamily.constant([[0.0]]))


@settings(max_examples=40, deadline=None)
@given(k=st.integers(1, 60), a=st.integers(0, 60), b=st.integers(0, 60))
def test_cocycle_and_inverse(k, a, b):
    fam = conditioned_family(11)
    l, m = k + a, k + a + b
    assert fam.cocycle_defect([(m, l, k)]) <= 1e-10
    round_trip = fam.backward_transition(k, m) @ fam.transition(m, k)
    np.testing.assert_allclose(round_trip, np.eye(3), atol=1e-8)


def test_apply_row_vectors():
    fam, gen = random_family(5)
    x = np.random.default_rng(0).standard_normal((4, 3))
    np.testing.assert_allclose(fam.apply(12, 2, x), x @ fam.transition(12, 2).T)


def test_check_invariance_examples():
    a = np.array([[2.0, 1.0], [0.0, 0.5]])
    w, v = np.linalg.eig(a)
    i = int(np.argmin(np.abs(w)))
    p = np.outer(v[:, i], np.linalg.inv(v)[i])
    fam = const(a, horizon=50)
    assert check_invariance(fam, ProjectionFamily.constant(p), horizon=50) <= 1e-12
    diag = EvolutionFamily(diagonal_power(polynomial(), [-1, 2], horizon=100))
    assert check_invariance(diag, ProjectionFamily.coordinate(2, [0]), horizon=100) == 0.0
    c, s = np.cos(0.4), np.sin(0.4)
    r = np.array([[c, -s], [s, c]])
    rotated = ProjectionFamily.constant(r @ np.diag([1.0, 0.0]) @ r.T)
    assert check_invariance(diag, rotated, pairs=[(20, 1)]) > 0.1


def test_projection_validation():
    with pytest.raises(ValueError):
        ProjectionFamily.constant([[1.0, 1.0], [0.0, 0.5]])(1)
    p = ProjectionFamily.coordinate(3, [0, 2])
    assert p.rank(4) == 2
    np.testing.assert_array_equal(p.complement(1), np.diag([0.0, 1.0, 0.0]))
    kb = kernel_basis(p(1))
    np.testing.assert_allclose(np.abs(kb.ravel()), [0.0, 1.0, 0.0], atol=1e-12)


def test_weighted_operator_norm_is_exact():
    rng = np.random.default_rng(1)
    s = {n: np.eye(2) + 0.2 * rng.standard_normal((2, 2)) for n in range(1, 5)}
    norms = NormFamily(2, weight=lambda n: s[n])
    t = rng.standard_normal((2, 2))
    exact = norms.op_norm(t, 3, 1)
    dirs = rng.standard_normal((20000, 2))
    ratios = norms.norm(3, dirs @ t.T) / norms.norm(1, dirs)
    assert ratios.max() <= exact * (1 + 1e-12)
    assert ratios.max() >= exact * (1 - 1e-3)


def test_norm_axioms_spot_check():
    rng = np.random.default_rng(2)
    w = np.array([[2.0, 1.0], [0.0, 1.0]])
    norms = NormFamily(2, weight=lambda n: w)
    x, y = rng.standard_normal((2, 50, 2))
    nx, ny, nxy = norms.norm(3, x), norms.norm(3, y), norms.norm(3, x + y)
    assert np.all(nxy <= nx + ny + 1e-12)
    np.testing.assert_allclose(norms.norm(3, -2.5 * x), 2.5 * nx)
    assert norms.norm(3, np.zeros(2)) == 0.0


def test_operator_norm_submultiplicative():
    rng = np.random.default_rng(3)
    s = {n: np.eye(2) + 0.3 * rng.standard_normal((2, 2)) for n in range(1, 4)}
    norms = NormFamily(2, weight=lambda n: s[n])
    a, b = rng.standard_normal((2, 2, 2))
    assert norms.op_norm(a @ b, 3, 1) <= norms.op_norm(a, 3, 2) * norms.op_norm(b, 2, 1) + 1e-12


def test_concrete_systems():
    rate = polynomial()
    diag = EvolutionFamily(diagonal_power(rate, [-1, 2]))
    np.testing.assert_allclose(diag.transition(9, 4), np.diag([(10 / 5) ** -1, (10 / 5) ** 2]))
    sw = EvolutionFamily(switched_power(rate, [3], [[1.0], [2.0]]))
    # steps 1, 2 use exponent 1; steps 3.. use exponent 2
    assert sw.transition(5, 1)[0, 0] == pytest.approx((3 / 2) * (4 / 3) * ((5 / 4) * (6 / 5)) ** 2)
    tab = table_operators([[[2.0]], [[3.0]]], repeat_last=True)
    assert EvolutionFamily(tab).transition(5, 1)[0, 0] == 2 * 3 ** 3
    short = table_operators([[[2.0]], [[3.0]]])
    with pytest.raises(HorizonError):
        short(5)
