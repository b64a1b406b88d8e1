"""
Fixed-step explicit Euler integration of the flows.

Random draws come from ``numpy.random.Philox`` (counter-based) keyed by the
configured seed, so noisy runs are reproducible across platforms.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ftopt.flows import FlowKind, SolverState, initial_aux, rhs_centralized, rhs_consensus, rhs_dual_dorap

DIVERGENCE_LIMIT = 1e9


class ContractError(ValueError):
    """Initial state violates the auxiliary-variable initialization."""


@dataclass(frozen=True)
class NoiseSpec:
    link_sigma: float = 0.0
    drift_sigma: float = 0.0

    def __post_init__(self):
        if self.link_sigma < 0 or self.drift_sigma < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    @property
    def active(self):
        return self.link_sigma > 0 or self.drift_sigma > 0


@dataclass(frozen=True)
class SimConfig:
    h: float
    t_end: float
    record_every: int = 1
    seed: int = 0
    noise: NoiseSpec | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if self.h > self.t_end:
            raise ValueError("step h exceeds the horizon")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.h))


@dataclass
class Trajectory:
    flow: FlowKind
    times: np.ndarray
    primary: np.ndarray
    aux: np.ndarray
    primal: np.ndarray | None = None
    diverged: bool = False
    diverged_step: int | None = None
    steps: int = 0
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def states(self):
        """Primal decisions: ``x_i`` for primal flows, recovered ``x_i`` for the dual flow."""
        return self.primal if self.flow is FlowKind.DUAL_DORAP else self.primary


def make_rng(seed, stream=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def inject_noise(reading, sigma, rng):
    """Add i.i.d. ``N(0, sigma^2)`` per component; ``sigma = 0`` returns ``reading`` untouched."""
    if sigma == 0:
        return reading
    return reading + sigma * rng.standard_normal(np.shape(reading))


def check_init(flow, models, state, profiles=None, rtol=1e-9):
    expected = initial_aux(flow, models, state.primary, profiles, state.t)
    scale = 1.0 + np.abs(expected)
    if state.aux.shape != expected.shape or np.any(np.abs(state.aux - expected) > rtol * scale):
        raise ContractError("auxiliary state does not match the required initialization "
                            "(gradient at x(0) for primal flows, x(lambda(0)) - d(0) for the dual flow)")


def euler_run(flow, models, net, gain, init, simcfg, profiles=None, progress=None):
    """
    Integrate ``state_{k+1} = state_k + h * rhs(state_k, t_k)``.

    Parameters
    ----------
    flow : FlowKind or str
    models : sequence of TVCost
        One model per agent (a single one for the centralized flow).
    net : Network or None
        Communication graph; ignored by the centralized flow.
    gain : GainSpec
    init : SolverState
        Must satisfy the auxiliary initialization of ``flow``.
    simcfg : SimConfig
    profiles : sequence of ResourceProfile, optional
        Required by the dual flow.

    Returns
    -------
    Trajectory
        Samples at every ``record_every`` steps plus the final step. On a
        non-finite state or a norm above ``DIVERGENCE_LIMIT`` the run stops
        and ``diverged``/``diverged_step`` are set.
    """
    flow = FlowKind(flow)
    if flow.needs_profiles and (profiles is None or len(profiles) != len(models)):
        raise ValueError("dual flow needs one resource profile per agent")
    if flow.needs_network and (net is None or net.n_nodes != len(models)):
        raise ValueError("network size does not match the number of agents")
    if flow is FlowKind.CENTRALIZED and len(models) != 1:
        raise ValueError("centralized flow takes exactly one model")
    check_init(flow, models, init, profiles)

    h, K = simcfg.h, simcfg.n_steps
    noise = simcfg.noise if simcfg.noise is not None and simcfg.noise.active else None
    rng = make_rng(simcfg.seed)
    n_links = 0 if net is None else net.directed[0].size

    state = init.copy()
    t0 = state.t
    N, n = state.primary.shape
    rec_idx = list(range(0, K + 1, simcfg.record_every))
    if rec_idx[-1] != K:
        rec_idx.append(K)
    R = len(rec_idx)
    times = np.empty(R)
    prim = np.empty((R, N, n))
    aux = np.empty((R, N, n))
    recov = np.empty((R, N, n)) if flow is FlowKind.DUAL_DORAP else None

    r = 0
    diverged_step = None
    start = time.perf_counter()
    for k in range(K + 1):
        state.t = t0 + k * h
        link_noise = drift_noise = None
        if noise is not None:
            if noise.link_sigma > 0 and n_links:
                link_noise = inject_noise(np.zeros((n_links, n)), noise.link_sigma, rng)
            if noise.drift_sigma > 0:
                drift_noise = inject_noise(np.zeros((N, n)), noise.drift_sigma, rng)

        if flow is FlowKind.CENTRALIZED:
            dp, dz = rhs_centralized(models[0], gain, state, drift_noise)
        elif flow is FlowKind.CONSENSUS_ZGS:
            dp, dz = rhs_consensus(models, net, gain, state, link_noise, drift_noise)
        else:
            dp, dz, X = rhs_dual_dorap(models, profiles, net, gain, state, link_noise, drift_noise)
            state.primal = X

        if r < R and rec_idx[r] == k:
            times[r] = state.t
            prim[r] = state.primary
            aux[r] = state.aux
            if recov is not None:
                recov[r] = state.primal
            r += 1
        if k == K:
            break

        state.primary = state.primary + h * dp
        state.aux = state.aux + h * dz
        if not (np.all(np.isfinite(state.primary)) and np.all(np.isfinite(state.aux))) or \
                max(np.abs(state.primary).max(), np.abs(state.aux).max()) > DIVERGENCE_LIMIT:
            diverged_step = k + 1
            break
        if progress is not None:
            progress(k + 1, K)

    elapsed = time.perf_counter() - start
    return Trajectory(
        flow=flow,
        times=times[:r],
        primary=prim[:r],
        aux=aux[:r],
        primal=None if recov is None else recov[:r],
        diverged=diverged_step is not None,
        diverged_step=diverged_step,
        steps=k,
        wall_time=elapsed,
    )
