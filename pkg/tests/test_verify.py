import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from oracles import brute_min_alpha, profile_min_alpha_loops
from pbcore.model import Additive, dump_instance, make_instance
from pbcore.verify import (GAP_STAR, Z_STAR, EnumerationTooLarge, ProfileError, ProfileVerifier, check_certificate,
                           coalition_size, compositions, gen_lower_bound, kth_largest, lower_bound_sweep,
                           min_alpha, probe_min_alpha, random_additive, random_coverage, ratios)

# smallest min_alpha over every feasible committee of the six-gadget submodular
# instance, from tests/oracles.py::profile_min_alpha_loops at the worst profile
EXAMPLE2_WORST = 1.0309784487888092


def test_ratio_conventions():
    r = ratios(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.0, 4.0]))
    assert r.tolist() == [0.0, math.inf, 0.5]


def test_coalition_size_examples():
    assert coalition_size(np.array([0.0, 1.0, 1.0000000001, 6.0]), 6, 6.0).tolist() == [1, 1, 1, 6]
    assert coalition_size(np.array([1.01]), 6, 6.0).tolist() == [2]


def test_kth_largest():
    r = np.array([[3.0, 1.0, 2.0]])
    assert kth_largest(r, np.array([1])).tolist() == [3.0]
    assert kth_largest(r, np.array([3])).tolist() == [1.0]


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(["additive", "coverage"]), st.integers(3, 8))
def test_full_matches_brute_force(seed, kind, m):
    if kind == "additive":
        inst = random_additive(3, m, m / 2, sizes="random", seed=seed)
    else:
        inst = random_coverage(3, m, m / 2, sizes="random", seed=seed)
    O = np.random.default_rng(seed).random(m) < 0.3
    alpha, cert = min_alpha(inst, O)
    assert alpha == pytest.approx(brute_min_alpha(inst, O), rel=1e-12, abs=1e-12)
    if cert is not None:
        assert check_certificate(inst, O, cert)
        assert cert.alpha_witnessed == alpha


@given(st.integers(0, 10_000))
def test_monotone_in_committee(seed):
    inst = random_coverage(4, 7, 3.5, seed=seed)
    g = np.random.default_rng(seed)
    O = g.random(7) < 0.3
    bigger = O | (g.random(7) < 0.3)
    assert min_alpha(inst, bigger)[0] <= min_alpha(inst, O)[0] + 1e-12


def test_whole_candidate_set_is_in_core():
    for seed in range(5):
        inst = random_additive(4, 6, 3, seed=seed)
        assert min_alpha(inst, np.ones(6, dtype=bool))[0] <= 1 + 1e-12


def test_empty_committee_infinite():
    inst = random_additive(3, 5, 2, seed=0)
    alpha, cert = min_alpha(inst, np.zeros(5, dtype=bool))
    assert alpha > 1 and cert is not None and check_certificate(inst, np.zeros(5, dtype=bool), cert)


def test_too_large():
    inst = make_instance([1.0] * 30, 10, [Additive(np.ones(30))])
    with pytest.raises(EnumerationTooLarge):
        min_alpha(inst, np.zeros(30, dtype=bool))


def test_strict_additament_never_smaller():
    for seed in range(6):
        inst = random_coverage(3, 6, 3, seed=seed)
        O = np.random.default_rng(seed).random(6) < 0.4
        free = min_alpha(inst, O)[0]
        strict, cert = min_alpha(inst, O, strict_additament=True)
        assert strict >= free - 1e-12
        if cert is not None:
            assert check_certificate(inst, O, cert, strict_additament=True)
    with pytest.raises(ValueError):
        min_alpha(gen_lower_bound(), np.zeros(30, dtype=bool), "profile", strict_additament=True)


def test_compositions_count():
    c = compositions([5] * 6, 15)
    assert len(c) == len({tuple(r) for r in c})
    assert (c.sum(axis=1) == 15).all() and (c <= 5).all()


@pytest.mark.parametrize("kind", ["submodular", "general"])
def test_profile_matches_full_at_m12(kind):
    inst = gen_lower_bound(kind, gadget_size=2, alpha_lb=10.0)
    g = np.random.default_rng(1)
    for _ in range(6):
        O = np.zeros(12, dtype=bool)
        O[g.choice(12, size=6, replace=False)] = True
        full = min_alpha(inst, O)[0]
        prof, cert = min_alpha(inst, O, "profile")
        assert prof == full
        if cert is not None:
            assert check_certificate(inst, O, cert)


def test_profile_rejects_non_gadget(coverage5):
    with pytest.raises(ProfileError):
        ProfileVerifier(coverage5)


def _loop_utility(inst):
    v0 = inst.voters

    def u(i, counts):
        mask = np.zeros(inst.m, dtype=bool)
        for g, c in enumerate(counts):
            mask[g * 5:g * 5 + c] = True
        return v0[i].value(mask)
    return u


def test_example2_worst_value():
    inst = gen_lower_bound("submodular")
    rep = lower_bound_sweep(inst)
    assert rep.profiles_total == 6**6
    assert rep.worst_alpha == pytest.approx(EXAMPLE2_WORST, abs=1e-12)
    assert rep.worst_alpha >= GAP_STAR - 1e-9
    loops = profile_min_alpha_loops(_loop_utility(inst), 6, 5, 6, 15.0, rep.worst_profile)
    assert loops == pytest.approx(rep.worst_alpha, abs=1e-12)


def test_gap_identity():
    z = Z_STAR
    assert z / (0.8 + 0.12 * z) == pytest.approx(GAP_STAR, abs=1e-12)
    assert 1 / (0.8 + 0.2 * z) == pytest.approx(GAP_STAR, abs=1e-12)


def test_probe_is_lower_bound():
    inst = random_coverage(4, 9, 4, seed=3)
    O = np.zeros(9, dtype=bool)
    O[[0, 4]] = True
    probe, _ = probe_min_alpha(inst, O, probes=500, seed=1)
    assert probe <= min_alpha(inst, O)[0] + 1e-12


def test_generators_deterministic():
    for make in (lambda s: random_additive(5, 8, 4, seed=s), lambda s: random_coverage(5, 8, 4, seed=s)):
        assert dump_instance(make(7)) == dump_instance(make(7))
        assert dump_instance(make(7)) != dump_instance(make(8))
    inst = gen_lower_bound("general", alpha_lb=100.0)
    assert inst.candidate_ids[:2] == ("g1_1", "g1_2") and inst.m == 30
