import math

import numpy as np
import pytest

from ftopt import signals as sg
from ftopt.flows import FlowKind, GainSpec, SolverState, coupling, initial_state
from ftopt.graph import Network, cycle
from ftopt.problems import QuadraticCost, TVLogistic
from ftopt.sim import ContractError, NoiseSpec, SimConfig, euler_run, inject_noise, make_rng


def static_unit():
    # f = 1/2 x^2, so z(0) = x(0)
    return QuadraticCost(1.0, (sg.const(0.0),))


def run_sign(h, t_end=1.5):
    m = static_unit()
    init = initial_state(FlowKind.CENTRALIZED, [m], [1.0])
    return euler_run("centralized", [m], None, GainSpec(a=1, p=1.0, alpha=0), init, SimConfig(h, t_end))


def test_sign_flow_lands_on_zero_for_dyadic_step():
    h = 1 / 64
    tr = run_sign(h)
    z = tr.aux[:, 0, 0]
    assert z[63] == h
    assert z[64] == 0.0
    assert np.all(z[64:] == 0.0)


def test_sign_flow_chatters_within_step_band():
    h = 0.03
    tr = run_sign(h, 3.0)
    z = tr.aux[:, 0, 0]
    k = math.ceil(1 / h)
    assert abs(z[k]) <= h
    assert np.all(np.abs(z[k:]) <= 1.0 * h + 1e-12)
    assert np.all(z[:k - 1] > 0)


def test_recording_grid():
    m = static_unit()
    init = initial_state(FlowKind.CENTRALIZED, [m], [1.0])
    tr = euler_run("centralized", [m], None, GainSpec(), init, SimConfig(0.1, 1.1, record_every=4))
    assert tr.times.tolist() == pytest.approx([0.0, 0.4, 0.8, 1.1])
    assert np.all(np.diff(tr.times) > 0)
    assert tr.primary.shape == (4, 1, 1) and tr.steps == 11


def identical_agents(N=3):
    return [TVLogistic(1, [0.3, 0.7], math.pi / 10, 2.0) for _ in range(N)]


def test_zero_gain_keeps_identical_agents_identical():
    models = identical_agents()
    x0 = np.tile([0.5, -0.2], (3, 1))
    init = initial_state(FlowKind.CONSENSUS_ZGS, models, x0)
    tr = euler_run("consensus_zgs", models, cycle(3), GainSpec(a=2, alpha=0), init, SimConfig(1e-3, 0.5, 10))
    assert np.all(tr.primary == tr.primary[:, :1, :])
    assert np.all(tr.aux == tr.aux[:, :1, :])


def noisy_run(seed):
    models = identical_agents(4)
    x0 = np.array([[0.1, 0.2], [0.4, -0.1], [0.0, 0.0], [-0.3, 0.5]])
    init = initial_state(FlowKind.CONSENSUS_ZGS, models, x0)
    cfg = SimConfig(1e-3, 0.2, 5, seed=seed, noise=NoiseSpec(1e-2, 1e-2))
    return euler_run("consensus_zgs", models, cycle(4), GainSpec(a=2, alpha=3), init, cfg)


def test_runs_are_bitwise_deterministic():
    a, b = noisy_run(7), noisy_run(7)
    assert np.array_equal(a.primary, b.primary) and np.array_equal(a.aux, b.aux)
    assert not np.array_equal(a.primary, noisy_run(8).primary)


def test_inject_noise_identity_and_variance():
    x = np.arange(5.0)
    rng = make_rng(1)
    assert inject_noise(x, 0.0, rng) is x
    # no draw was consumed
    assert rng.standard_normal() == make_rng(1).standard_normal()
    draws = inject_noise(np.zeros(100_000), 0.01, make_rng(2))
    assert abs(draws.var() / 1e-4 - 1) < 0.05


def test_rng_is_philox():
    assert type(make_rng(0).bit_generator).__name__ == "Philox"


def test_sign_flips_rare_when_gap_dominates_noise():
    # gap of 5 sigma: the Gaussian tail gives about 3e-7
    net = Network.from_edge_list(2, [[1, 2, 1]])
    X = np.array([[0.05], [0.0]])
    rng = make_rng(3)
    flips = 0
    trials = 100_000
    noise = inject_noise(np.zeros((trials, 2, 1)), 0.01, rng)
    for k in range(trials):
        c = coupling(net, X, 1.0, link_noise=noise[k])
        flips += c[0, 0] != 1.0
    assert flips / trials < 1e-3


def smooth_run(h):
    m = QuadraticCost([[2.0, 0.3], [0.3, 1.0]], (sg.sin(1.0, 1.0), sg.cos(0.5, 2.0)))
    init = initial_state(FlowKind.CENTRALIZED, [m], [4.0, -8.0])
    steps = int(round(0.5 / h))
    tr = euler_run("centralized", [m], None, GainSpec(a=1, p=0.5), init, SimConfig(h, 0.5, steps))
    return tr.primary[-1, 0]


def test_euler_is_first_order_before_sliding():
    ref = smooth_run(1e-3 / 64)
    errs = [np.linalg.norm(smooth_run(h) - ref) for h in (1e-3 / 2, 1e-3 / 4, 1e-3 / 8)]
    for e1, e2 in zip(errs, errs[1:]):
        assert 2 / 1.5 <= e1 / e2 <= 2 * 1.5


def test_init_contract_enforced():
    m = static_unit()
    bad = SolverState(0.0, np.array([[1.0]]), np.array([[0.5]]))
    with pytest.raises(ContractError):
        euler_run("centralized", [m], None, GainSpec(), bad, SimConfig(0.1, 1.0))


def test_divergence_flagged_with_first_bad_step():
    m = QuadraticCost(1e-12, (sg.const(1.0),))
    init = initial_state(FlowKind.CENTRALIZED, [m], [0.0])
    tr = euler_run("centralized", [m], None, GainSpec(a=1), init, SimConfig(0.1, 1.0))
    assert tr.diverged and tr.diverged_step == 1
    assert tr.times.tolist() == [0.0]


def test_centralized_aux_tracks_gradient():
    # z stays close to grad f(x, t) and the gap shrinks with h
    def gap(h):
        m = QuadraticCost(1.0, (sg.sin(-1.0), sg.cos(-1.0)))
        init = initial_state(FlowKind.CENTRALIZED, [m], [4.0, -8.0])
        tr = euler_run("centralized", [m], None, GainSpec(a=5, p=0.5), init, SimConfig(h, 2.0, 10))
        g = np.array([m.grad(x[0], t) for x, t in zip(tr.primary, tr.times)])
        return np.abs(g - tr.aux[:, 0]).max()

    g1, g2 = gap(1e-3), gap(5e-4)
    assert g1 < 1e-2
    assert 1.5 <= g1 / g2 <= 2.5


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(2.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(0.1, 1.0, record_every=0)
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)
