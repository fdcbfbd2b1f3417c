import numpy as np
import pytest

from udpmean.audit import (MIN_TRIALS, NeighborPair, family_a, family_b, g2_probability,
                           run_audit)


def test_families_are_neighbors():
    for pair in (family_a(), family_b()):
        diff = np.any(pair.points != pair.neighbor, axis=1)
        assert diff.sum() == 1


def test_family_b_straddles_two_thirds():
    pair = family_b(40)
    n = 40
    assert np.sum(pair.points[:, 0] == 0) > 2 * n / 3
    assert np.sum(pair.neighbor[:, 0] == 0) <= 2 * n / 3


def test_g2_closed_form():
    assert g2_probability(0.0, 10) == 1.0
    assert g2_probability(1.0, 10) == 0.0
    q, N = 0.2, 7
    # sum over Geometric(1/N) rounds of (1-q)^X
    ks = np.arange(1, 2000)
    series = np.sum((1 / N) * (1 - 1 / N) ** (ks - 1) * (1 - q) ** ks)
    assert g2_probability(q, N) == pytest.approx(series, rel=1e-12)


def test_audit_passes_correct_mechanism():
    rep = run_audit(trials=20_000, seed=1)
    assert rep.passed and not rep.insufficient_trials
    for r in rep.results:
        assert r.q <= 0.5 and r.q_prime <= 0.5


def test_audit_flags_broken_stub():
    rep = run_audit(trials=20_000, seed=1, accept_const=0.9)
    assert not rep.passed


def test_identical_pair_passes():
    x = np.linspace(0, 1, 30)[:, None]
    rep = run_audit(trials=MIN_TRIALS, pairs=[NeighborPair("same", x, x.copy())])
    assert rep.passed


def test_insufficient_trials_flag():
    assert run_audit(trials=1000).insufficient_trials
