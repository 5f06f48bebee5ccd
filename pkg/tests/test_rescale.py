import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mudich.errors import HorizonError
from mudich.growth import exponential, geometric, polynomial
from mudich.rescale import RescaleIndexMap, build
from mudich.system import (EvolutionFamily, OperatorSequence, ProjectionFamily,
                           diagonal_power, sparse_spike)

# tau for mu_n = n + 1 and eta_n = e^n: floor(e^(k-1) - 1) + 1 (frozen from the closed form)
TAU_POLY_EXP = [1, 2, 7, 20, 54, 148, 403, 1096, 2980, 8103, 22026, 59874]
POLY = polynomial()


def test_tau_closed_form_oracle():
    tau = RescaleIndexMap(polynomial(), exponential())
    oracle = [int(math.floor(math.exp(k - 1) - 1)) + 1 for k in range(1, 13)]
    assert oracle == TAU_POLY_EXP
    assert tau.table(12) == TAU_POLY_EXP


def test_tau_examples():
    assert RescaleIndexMap(polynomial(), exponential())(1) == 1
    assert RescaleIndexMap(polynomial(), geometric(2.0))(4) == 8
    mu = polynomial()
    assert RescaleIndexMap(mu, mu)(9) == 9


def test_tau_powers_of_two():
    tau = RescaleIndexMap(polynomial(), geometric(2.0))
    assert tau.table(15) == [2 ** (k - 1) for k in range(1, 16)]


@settings(max_examples=30, deadline=None)
@given(h=st.floats(1.1, 4.0))
def test_tau_monotone_and_sandwich(h):
    mu, eta = POLY, geometric(h)
    tau = RescaleIndexMap(mu, eta)
    vals = tau.table(12)
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    for k in range(1, 13):
        t = tau(k)
        if t >= 2:
            assert mu.value(t) >= eta.value(k - 1)
            assert mu.value(t - 1) <= eta.value(k - 1)


def test_identity_rescale_is_exact():
    mu = polynomial()
    fam = EvolutionFamily(diagonal_power(mu, [-1.0, 0.5], horizon=200))
    rs = build(fam, mu, mu)
    for n in range(1, 150):
        assert np.array_equal(rs.Q(n), fam.ops(n))


def test_first_rescaled_step():
    mu = polynomial()
    fam = EvolutionFamily(diagonal_power(mu, [-1.0, 2.0], horizon=1000))
    rs = build(fam, mu)
    assert rs.tau(2) == 2
    assert np.array_equal(rs.Q(1), fam.ops(1))


def test_rescaled_transition_examples():
    two = EvolutionFamily(OperatorSequence(1, lambda n: np.array([[2.0]]), True, 100))
    rs = build(two, polynomial(), geometric(2.0))
    assert rs.rescaled_transition(3, 2)[0, 0] == 4.0
    np.testing.assert_array_equal(rs.rescaled_transition(4, 4), [[1.0]])
    spike = EvolutionFamily(sparse_spike(2 ** 14))
    rs = build(spike, polynomial(), geometric(2.0))
    assert rs.rescaled_transition(3, 1)[0, 0] == 0.0
    assert all(rs.Q(n)[0, 0] == 0.0 for n in range(1, rs.horizon))


def test_rescaled_transition_matches_q_products():
    mu = polynomial()
    rng = np.random.default_rng(4)
    mats = {}

    def gen(n):
        if n not in mats:
            q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
            mats[n] = q * np.exp(rng.uniform(-0.02, 0.02))
        return mats[n]

    fam = EvolutionFamily(OperatorSequence(2, gen, True, 5000))
    rs = build(fam, mu)
    for m, n in [(2, 1), (5, 2), (8, 3)]:
        prod = np.eye(2)
        for j in range(n, m):
            prod = rs.Q(j) @ prod
        np.testing.assert_allclose(rs.rescaled_transition(m, n), prod, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(rs.family.transition(m, n), prod, rtol=1e-10, atol=1e-12)


def test_horizon_exhaustion_reports_largest_index():
    mu = polynomial()
    fam = EvolutionFamily(diagonal_power(mu, [1.0], horizon=1000))
    rs = build(fam, mu)
    assert rs.horizon == 7  # tau(7) = 403 <= 1000 < tau(8) = 1096
    with pytest.raises(HorizonError) as err:
        rs.rescaled_transition(9, 1)
    assert err.value.largest == 7
    with pytest.raises(HorizonError):
        build(EvolutionFamily(diagonal_power(mu, [1.0], horizon=1)), mu)


def test_projections_follow_tau():
    mu = polynomial()
    fam = EvolutionFamily(diagonal_power(mu, [-1.0, 2.0], horizon=1000))
    seen = []

    def gen(n):
        seen.append(n)
        return np.diag([1.0, 0.0])

    rs = build(fam, mu, projections=ProjectionFamily(2, gen))
    rs.projections(4)
    assert seen[-1] == TAU_POLY_EXP[3]
