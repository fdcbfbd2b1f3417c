import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udpmean.mechanism import (EstimateOutcome, GridSpec, MechanismParams, Outcome, RoundOutcome,
                               acceptance_probability, dp_estimate_1, estimate_accept_prob,
                               garbage_index_probability, reference_density, run_rounds,
                               sample_retries, single_round)

# frozen from an independent 40-digit mpmath evaluation
ACC_200_1 = 1.224871477360899752e-27
PG_50 = 2.311045997197301448e-05
PG_5 = 0.8803482653756909069


def test_acceptance_examples():
    assert acceptance_probability(20, 30, 0.5) == pytest.approx(0.5, rel=1e-12)
    assert acceptance_probability(30, 30, 0.5) == pytest.approx(1 / 3, rel=1e-12)
    assert acceptance_probability(1, 200, 0.5) == pytest.approx(ACC_200_1, rel=1e-9)


def test_acceptance_errors():
    for fp in (0, 31):
        with pytest.raises(ValueError):
            acceptance_probability(fp, 30, 0.5)


def test_acceptance_clamped():
    # below the valid-probability regime the raw formula exceeds 1
    assert (10 / 3) * math.exp(0.1 * (1 - 20 / 3)) > 1
    assert acceptance_probability(1, 10, 0.1) == 1.0


def test_acceptance_vectorized():
    fp = np.arange(1, 31)
    vec = acceptance_probability(fp, 30, 0.5)
    assert np.allclose(vec, [acceptance_probability(int(f), 30, 0.5) for f in fp], rtol=1e-14)


@settings(max_examples=300)
@given(st.sampled_from([0.02, 0.05, 0.1, 0.2, 0.3]), st.integers(0, 400), st.floats(0, 1))
def test_valid_prob_regime(eps, extra, frac):
    n = math.ceil(12 / eps * math.log(1 / eps)) + extra
    fp = max(1, min(n, int(round(frac * n))))
    assert acceptance_probability(fp, n, eps) <= 0.5


def test_garbage_index_examples():
    assert garbage_index_probability(50, 0.5, 0.01) == pytest.approx(PG_50, rel=1e-9)
    assert garbage_index_probability(5, 0.3, 0.2) == pytest.approx(PG_5, rel=1e-12)
    # no overflow for huge n
    assert garbage_index_probability(10**6, 0.5, 0.01) == 0.0


def test_params_validation():
    MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
    bad = [dict(eps=0), dict(delta=0), dict(delta=0.5), dict(alpha=0.4), dict(r=0),
           dict(eps=0.001, delta=0.01)]
    for kw in bad:
        args = dict(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
        args.update(kw)
        with pytest.raises(ValueError):
            MechanismParams(**args)


def test_params_warnings():
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
    assert "undersized" in p.warnings(10)
    assert p.warnings(10_000) == []
    assert "eps_above_third" in MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0).warnings(10**6)


def test_retry_mean_exact_integer():
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
    assert p.retry_mean(1) == 10
    assert MechanismParams(eps=0.3, delta=0.01, alpha=0.01, r=1.0).retry_mean(1) == 100


def test_outcome_invariants():
    with pytest.raises(ValueError):
        EstimateOutcome(Outcome.ACCEPTED, None, 1)
    with pytest.raises(ValueError):
        EstimateOutcome(Outcome.GARBAGE1, np.zeros(2), 1)
    with pytest.raises(ValueError):
        EstimateOutcome(Outcome.ACCEPTED, np.array([np.nan]), 1)


def test_single_round_empty():
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
    with pytest.raises(ValueError):
        single_round(np.zeros((0, 2)), p, np.random.default_rng(0))


def test_single_round_identical_points(rng):
    # f(p) = n everywhere in the ball: every non-garbage index accepts with prob 1/3
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    x = np.zeros((50, 2))
    outs = [single_round(x, p, rng) for _ in range(3000)]
    acc = sum(o is RoundOutcome.ACCEPTED_POINT for o, _ in outs)
    assert abs(acc / 3000 - 1 / 3) < 4 * math.sqrt(2 / 9 / 3000)
    for o, pt in outs:
        if o is RoundOutcome.ACCEPTED_POINT:
            assert np.linalg.norm(pt) <= math.sqrt(2)


def test_retries_geometric(rng):
    N = 50
    xs = np.array([sample_retries(N, rng) for _ in range(20_000)])
    assert xs.min() >= 1
    assert abs(xs.mean() - N) < 0.05 * N
    assert sample_retries(1, rng) == 1


def test_forced_reject_retry_count(rng):
    # impossible-acceptance stub: every run uses all X rounds
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.01, r=1.0, accept_const=0.0, g1_accept=0.0)
    N = p.retry_mean(1)
    rounds = np.array([dp_estimate_1(np.zeros((1, 1)), p, rng).rounds for _ in range(10_000)])
    assert abs(rounds.mean() - N) <= 0.05 * N
    for t in (1, 2, 3, 4):
        assert np.mean(rounds > t * N) <= math.exp(-t / 2)


def test_forced_reject_gives_g2(rng):
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0, accept_const=0.0, g1_accept=0.0)
    assert dp_estimate_1(np.zeros((3, 2)), p, rng).kind is Outcome.GARBAGE2


def test_dp1_accuracy_concentrated(rng):
    alpha = 0.1
    p = MechanismParams(eps=1 / 3, delta=0.01, alpha=alpha, r=1.0)
    n = math.ceil(p.min_points())
    x = np.zeros((n, 8))
    good = 0
    for _ in range(1000):
        out = dp_estimate_1(x, p, rng)
        good += out.accepted and np.linalg.norm(out.point) <= 1 + math.sqrt(8)
    assert good / 1000 >= 1 - 2 * alpha


def test_dp1_spread_instance_garbage(rng):
    # points 10 apart, ball radius 1: every f(p) = 1 and tiny delta makes G1 dominate
    p = MechanismParams(eps=0.5, delta=1e-6, alpha=0.1, r=1.0)
    x = np.arange(8, dtype=float)[:, None] * 10
    kinds = [dp_estimate_1(x, p, rng).kind for _ in range(4000)]
    garbage = np.mean([k is not Outcome.ACCEPTED for k in kinds])
    assert garbage > 0.9
    lo, hi = (-2.0,), (73.0,)
    ref = reference_density(x, p, GridSpec(lo, hi, (75,)))
    non_g2 = [k for k in kinds if k is not Outcome.GARBAGE2]
    g1 = np.mean([k is Outcome.GARBAGE1 for k in non_g2])
    assert abs(g1 - ref.garbage) < 4 * math.sqrt(ref.garbage * (1 - ref.garbage) / len(non_g2)) + 1e-3


def test_dp1_deterministic():
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0)
    x = np.random.default_rng(3).normal(size=(60, 4)) * 0.2
    a = dp_estimate_1(x, p, np.random.default_rng(9))
    b = dp_estimate_1(x, p, np.random.default_rng(9))
    assert a.same_as(b)


def test_run_rounds_reports_usage(rng):
    p = MechanismParams(eps=0.3, delta=0.01, alpha=0.1, r=1.0, accept_const=0.0, g1_accept=0.0)
    kind, pt, used = run_rounds(np.zeros((2, 1)), p, 37, rng)
    assert kind is RoundOutcome.REJECTED and pt is None and used == 37


def test_reference_density_single_point():
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    ref = reference_density([[0.0]], p, GridSpec((-2.0,), (2.0,), (40,)))
    inside = ref.mass[10:30]
    assert np.allclose(inside, inside[0], rtol=1e-9)
    assert np.all(ref.mass[:10] == 0) and np.all(ref.mass[30:] == 0)
    # garbage weight (4/delta) V_B against e^{eps min(1, 2/3)} V_B, V_B = 2
    expected = (4 / 0.01) / ((4 / 0.01) + math.exp(0.5 * 2 / 3))
    assert ref.garbage == pytest.approx(expected, rel=1e-9)
    assert ref.mass.sum() + ref.garbage == pytest.approx(1.0, rel=1e-12)


def test_reference_density_two_disjoint_balls():
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    ref = reference_density([[0.0], [5.0]], p, GridSpec((-2.0,), (7.0,), (90,)))
    left, right = ref.mass[:45].sum(), ref.mass[45:].sum()
    assert left == pytest.approx(right, rel=1e-9)


def test_reference_density_overlap_ratio():
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    # balls [-1, 1] and [0, 2]; overlap [0, 1], single cover [-1, 0) and (1, 2].
    # With n = 2 the cap 2n/3 = 4/3 binds: ratio e^{eps (4/3 - 1)}
    ref = reference_density([[0.0], [1.0]], p, GridSpec((-1.0,), (2.0,), (30,)))
    assert ref.mass[15] / ref.mass[0] == pytest.approx(math.exp(0.5 / 3), rel=1e-9)
    # a third far point lifts the cap to 2, so the full e^{eps} ratio shows
    ref = reference_density([[0.0], [1.0], [10.0]], p, GridSpec((-1.0,), (11.0,), (120,)))
    assert ref.mass[15] / ref.mass[0] == pytest.approx(math.exp(0.5), rel=1e-9)


def test_reference_density_errors():
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    with pytest.raises(ValueError):
        reference_density(np.zeros((2, 3)), p, GridSpec((-2,) * 3, (2,) * 3, (4,) * 3))
    with pytest.raises(ValueError):
        reference_density([[0.0]], p, GridSpec((-0.5,), (2.0,), (10,)))


def test_accept_prob_lower_bound(rng):
    n = 40
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    q, se = estimate_accept_prob(np.zeros((n, 1)), p, 10_000, rng)
    assert q >= 1 / (18 * math.exp(10 * math.sqrt(math.log(n)))) - 3 * se


def test_accept_prob_seed_consistency():
    p = MechanismParams(eps=0.5, delta=0.01, alpha=0.1, r=1.0)
    x = np.linspace(0, 3, 12)[:, None]
    q1, s1 = estimate_accept_prob(x, p, 10_000, np.random.default_rng(1))
    q2, s2 = estimate_accept_prob(x, p, 10_000, np.random.default_rng(2))
    assert abs(q1 - q2) <= 4 * math.hypot(s1, s2)


def test_accept_prob_single_point(rng):
    eps, delta = 0.3, 0.2
    p = MechanismParams(eps=eps, delta=delta, alpha=0.1, r=1.0)
    pg = garbage_index_probability(1, eps, delta)
    exact = (1 - pg) * min(1.0, math.exp(eps / 3) / 3) + pg / 3
    q, se = estimate_accept_prob(np.zeros((1, 3)), p, 20_000, rng)
    assert abs(q - exact) <= 3 * se
