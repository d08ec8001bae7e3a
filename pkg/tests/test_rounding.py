import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from pbcore import rng
from pbcore.model import Additive, make_instance
from pbcore.rounding import (Committee, RoundingCapExceeded, accept_realization, beta_additive, beta_submodular,
                             gamma_satisfaction, overflow_bound, round_dependent, round_dependent_many,
                             round_independent, round_submodular, round_until_accepted, satisfied_needed)
from pbcore.verify import gen_lower_bound, random_additive

BETA_SUB = 0.05354735709537077  # (0.21 e^0.79)^(1/0.21) + 6.435 e^-5.435
BETA_ADD = 0.02241796856505752  # 6.7 e^-5.7


def test_beta_values():
    assert beta_submodular(0.21, 7.435) == pytest.approx(BETA_SUB, abs=1e-15)
    assert beta_additive(6.7) == pytest.approx(BETA_ADD, abs=1e-15)
    assert satisfied_needed(100, BETA_SUB, 0.01) == math.ceil(0.93645264 * 100)


def _unit(m, b, n=1):
    return make_instance([1] * m, b, [Additive(np.ones(m)) for _ in range(n)])


def test_integral_x_deterministic():
    inst = _unit(4, 3)
    x = np.array([1, 0, 1, 0.0])
    for seed in range(5):
        O = round_independent(inst, x, 3, 1.0, rng.stream(seed))
        assert np.array_equal(O.members, x == 1)


def test_nothing_affordable_gives_small_only():
    inst = make_instance([2, 2, 0.001], 4, [Additive(np.ones(3))])
    O = round_independent(inst, np.array([0.9, 0.9, 1.0]), 4, 0.25, rng.stream(0))
    assert O.members.tolist() == [False, False, True]


def test_binomial_count():
    inst = _unit(10, 5)
    x = np.full(10, 0.5)
    counts = [round_independent(inst, x, 5, 1.0, rng.stream(s)).members.sum() for s in range(10_000)]
    assert abs(np.mean(counts) - 5) <= 0.15


def test_overflow_frequency():
    # 40 unit candidates at x = B / 40 with kappa B = 8: the Chernoff bound caps overflow
    kappa, B = 0.21, 40.0
    inst = _unit(60, B)
    x = np.zeros(60)
    x[:40] = kappa * B / 40
    over = sum(round_independent(inst, x, B, kappa, rng.stream(s)).cost(inst.sizes) > B for s in range(5000))
    assert over / 5000 <= overflow_bound(kappa) + 0.02


def test_accept_conditions():
    inst = _unit(3, 2)
    O = Committee(np.array([True, True, True]))
    assert not accept_realization(inst, [0], np.array([1.0]), O, 2.0, 7.435, BETA_SUB)
    O = Committee(np.array([True, False, False]))
    assert accept_realization(inst, [0], np.array([1.0]), O, 2.0, 7.435, BETA_SUB)


def test_satisfaction_full_committee():
    inst = random_additive(4, 6, 3, seed=2)
    O = Committee(np.ones(6, dtype=bool))
    U = np.array([0.5, 1.0, 0.2, 2.0])
    for r in gamma_satisfaction(inst, range(4), U, O, 7.435):
        full = inst.voters[r.voter].value(O.members)
        assert r.satisfied and r.ratio == pytest.approx(full / U[r.voter])


def test_satisfaction_zero_fractional():
    inst = _unit(3, 2)
    r = gamma_satisfaction(inst, [0], np.array([0.0]), Committee(np.zeros(3, dtype=bool)), 7.0)[0]
    assert r.satisfied and r.ratio == math.inf


def test_satisfaction_gadget_singleton():
    inst = gen_lower_bound("submodular")
    O = Committee(np.zeros(30, dtype=bool))
    for U in (1.0, 1.4, 1.6):
        r = gamma_satisfaction(inst, [0], np.array([U]), O, 7.435)[0]
        assert r.with_additament == pytest.approx(0.2)
        assert inst.candidate_ids[r.additament].startswith("g1_")
        assert r.satisfied == (0.2 >= U / 7.435)


def test_dependent_integral_unchanged():
    c = round_dependent([1.0, 0.0, 1.0], [1, 2, 3], 4.0, gen=0)
    assert c.members.tolist() == [True, False, True] and c.leftover is None


def test_dependent_two_halves():
    X = round_dependent_many([0.5, 0.5], [1, 1], 1.0, 20_000, seed=1)
    assert set(X.sum(axis=1)) == {1.0}
    assert abs(X[:, 0].mean() - 0.5) < 0.01


def test_dependent_three_way():
    X = round_dependent_many([0.3, 0.3, 0.4], [1, 1, 1], 1.0, 100_000, seed=2)
    assert np.all(X.sum(axis=1) == 1.0)
    assert np.abs(X.mean(axis=0) - [0.3, 0.3, 0.4]).max() <= 0.01


def test_dependent_trace_constant():
    c = round_dependent([0.2, 0.7, 0.35, 0.9], [1, 2, 0.5, 1.5], None, gen=4, trace=True)
    assert np.allclose(c.cost_trace, c.cost_trace[0], atol=1e-9)
    assert c.leftover is None or 0 < c.leftover[1] < 1


def test_dependent_rejects_overbudget():
    with pytest.raises(ValueError):
        round_dependent([0.9, 0.9], [1, 1], 1.0)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=9), st.integers(0, 2**32), st.data())
def test_dependent_properties(x, seed, data):
    sizes = data.draw(st.lists(st.floats(0.1, 5), min_size=len(x), max_size=len(x)))
    s = np.array(sizes)
    B = float(s @ np.array(x))
    c = round_dependent(x, s, B, gen=seed)
    X = c.X()
    assert X @ s == pytest.approx(B, abs=1e-9 * max(1, B))
    assert ((X > 0) & (X < 1)).sum() <= 1
    assert c.members @ s <= B + 1e-9


def test_round_submodular_reproducible(coverage5):
    x = np.array([0.4, 0.4, 0.4, 0.4, 0.4])
    a, ra = round_submodular(coverage5, [0, 1], x, 2.0, 0.5, 7.435, seed=3)
    b, rb = round_submodular(coverage5, [0, 1], x, 2.0, 0.5, 7.435, seed=3)
    assert np.array_equal(a.members, b.members) and ra == rb


def test_cap_exceeded():
    inst = _unit(3, 2, n=2)
    # gamma = 1 and a fractional utility no single committee reaches
    with pytest.raises(RoundingCapExceeded) as err:
        round_until_accepted(inst, [0, 1], np.full(3, 0.5), np.array([10.0, 10.0]), 2.0, 2.0, 0.0, 0, (0,),
                             "independent", cap=5)
    assert err.value.attempts == 5 and err.value.needed == 2
