import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mppd_lab.network import DLIF, LIF, init_network
from mppd_lab.neuron import LifParams
from mppd_lab.numerics import make_rng, spectral_norm
from mppd_lab.stability import (
    audit_network,
    empirical_gain,
    gain_bound,
    gain_ratios,
    prefix_violations,
    random_drive,
)


def test_gain_bound_identity():
    b = gain_bound(np.eye(2), 0.75)
    assert b.gamma == pytest.approx(2.0)
    assert b.beta == 0.0


def test_gain_bound_diagonal():
    assert gain_bound(np.diag([3.0, 4.0]), 0.84).gamma == pytest.approx(10.0)


def test_gain_bound_default_leak():
    W = make_rng(0).standard_normal((5, 4))
    assert gain_bound(W, 0.99).gamma == pytest.approx(10 * spectral_norm(W), rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, 1.0, 1.2])
def test_gain_bound_rejects_leak_outside_unit_interval(lam):
    with pytest.raises(ValueError):
        gain_bound(np.eye(2), lam)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (3, 3), elements=st.floats(-2, 2)).filter(lambda W: np.abs(W).max() > 1e-3),
    st.floats(0.01, 0.98),
    st.floats(0.001, 0.01),
)
def test_gamma_strictly_increasing_in_leak(W, lam, dlam):
    assert gain_bound(W, lam + dlam).gamma > gain_bound(W, lam).gamma


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-2, 2)), st.floats(0.1, 10), st.sampled_from([0.5, 0.9, 0.99]))
def test_gamma_scale_equivariant(W, c, lam):
    assert gain_bound(c * W, lam).gamma == pytest.approx(c * gain_bound(W, lam).gamma, rel=1e-8, abs=1e-12)


def test_zero_weights_give_zero_ratio():
    assert empirical_gain(np.zeros((3, 3)), 0.9, 20, 10, make_rng(0)) == 0.0


def _constant_drive_ratio(c, lam, T):
    eps = np.array([c * (1 - lam**t) / (1 - lam) for t in range(1, T + 1)])
    return math.sqrt(np.sum(eps**2) / T)


@pytest.mark.parametrize("T", [1, 5, 50, 400])
def test_constant_drive_ratio_matches_closed_form(T):
    c = 0.7
    ratios = gain_ratios(np.array([[c]]), 0.9, np.ones((T, 1)))
    assert ratios[-1] == pytest.approx(_constant_drive_ratio(c, 0.9, T), rel=1e-12)


def test_constant_drive_approaches_geometric_gain():
    # for long constant drives the ratio tends to c / (1 - lam), which exceeds c * sqrt(1 / (1 - lam))
    c, lam = 0.7, 0.9
    b = gain_bound(np.array([[c]]), lam)
    r = gain_ratios(np.array([[c]]), lam, np.ones((2000, 1)))[-1]
    assert r == pytest.approx(b.gamma_geometric, rel=1e-2)
    assert r > b.gamma
    assert r <= b.gamma_geometric


def test_minimal_counterexample_to_square_root_bound():
    # W = 1, lam = 0.5, three unit steps: ||eps||^2 = 1 + 1.5^2 + 1.75^2 = 6.3125 > 2 * 3
    ds = np.ones((3, 1))
    b = gain_bound(np.array([[1.0]]), 0.5)
    assert gain_ratios(np.array([[1.0]]), 0.5, ds)[-1] ** 2 * 3 == pytest.approx(6.3125)
    assert prefix_violations(np.array([[1.0]]), 0.5, ds, b.gamma) == 1
    assert prefix_violations(np.array([[1.0]]), 0.5, ds, b.gamma_geometric) == 0


@settings(max_examples=80, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.integers(1, 8),
    st.integers(1, 8),
    st.integers(1, 40),
    st.sampled_from([0.5, 0.9, 0.99]),
)
def test_geometric_gain_is_never_exceeded(seed, n_out, n_in, T, lam):
    rng = make_rng(seed)
    W = rng.standard_normal((n_out, n_in))
    ds = random_drive(rng, T, n_in)
    b = gain_bound(W, lam)
    assert prefix_violations(W, lam, ds, b.gamma_geometric) == 0


def test_random_drive_alphabet():
    ds = random_drive(make_rng(0), 50, 7)
    assert set(np.unique(ds)).issubset({-1.0, 0.0, 1.0})
    real = random_drive(make_rng(0), 50, 7, real_valued=True)
    assert np.all(np.abs(real) <= 1)


def test_empirical_gain_is_trial_order_independent():
    W = make_rng(1).standard_normal((4, 4))
    a = empirical_gain(W, 0.9, 30, 12, make_rng(9))
    b = empirical_gain(W, 0.9, 30, 12, make_rng(9))
    assert a == b


def test_fresh_network_gain_below_gamma():
    net = init_network([784, 128], 10, 8, LifParams(0.99), make_rng(0))
    for b in audit_network(net):
        emp = empirical_gain(net.weights[b.layer - 1], b.lam, 50, net.T, make_rng(1), real_valued=True)
        assert emp <= b.gamma


def test_audit_lif_network():
    net = init_network([6, 5, 4], 3, 8, LifParams(0.99), make_rng(0))
    for b, W in zip(audit_network(net), net.weights):
        assert b.gamma == pytest.approx(10 * spectral_norm(W), rel=1e-9)
        assert b.applicable and not b.heuristic


def test_audit_dlif_unit_a_matches_lif():
    lif = init_network([6, 5, 4], 3, 8, LifParams(0.9), make_rng(0), kind=LIF)
    dlif = init_network([6, 5, 4], 3, 8, LifParams(0.9), make_rng(0), kind=DLIF)
    for a, b in zip(audit_network(lif), audit_network(dlif)):
        assert a.gamma == pytest.approx(b.gamma, rel=1e-12)
        assert b.heuristic


def test_audit_flags_effective_leak_at_or_above_one():
    net = init_network([6, 5], 3, 8, LifParams(0.9), make_rng(0), kind=DLIF)
    net.dlif_a[0][3] = 1.2
    (b,) = audit_network(net)
    assert not b.applicable
    assert b.gamma is None
