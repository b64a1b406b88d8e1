"""
Right-hand sides of the finite-time tracking dynamics and their gain bounds.

Three flows are provided:

* centralized: ``x' = -H^{-1}(phi(z) + dgrad/dt)``, ``z' = -phi(z)``;
* consensus (extended zero-gradient-sum): each agent adds the binary
  coupling ``alpha * sum_j a_ij sgn(x_i - x_j)`` inside its local Newton step;
* dual resource allocation: the consensus flow applied to the negated local
  dual functions, so the Hessian multiplies instead of being inverted.

All state arrays have shape ``(N, n)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ftopt.problems import conjugate_argmax, dual_surfaces, solve_sym


class FlowError(ArithmeticError):
    pass


class FlowKind(str, enum.Enum):
    CENTRALIZED = "centralized"
    CONSENSUS_ZGS = "consensus_zgs"
    DUAL_DORAP = "dual_dorap"

    @property
    def needs_profiles(self):
        return self is FlowKind.DUAL_DORAP

    @property
    def needs_network(self):
        return self is not FlowKind.CENTRALIZED


@dataclass(frozen=True)
class GainSpec:
    """
    Driving function ``phi`` and coupling gain.

    ``power_sign``:  ``a sgn^{1-p}(z) + b sgn^q(z)`` componentwise.
    ``norm_scaled``: ``a z / ||z||_r^p + b z ||z||_r^{q-1}``.

    ``smoothing`` replaces ``sgn(u)`` in the coupling by ``u / (|u| + eps)``.
    It departs from the discontinuous protocol and is meant for chattering
    studies only; the default ``None`` keeps the exact sign.
    """

    variant: str = "power_sign"
    a: float = 1.0
    b: float = 0.0
    p: float = 0.5
    q: float = 2.0
    r: float = 2.0
    alpha: float = 1.0
    smoothing: float | None = None

    def __post_init__(self):
        if self.variant not in ("power_sign", "norm_scaled"):
            raise ValueError(f"unknown phi variant {self.variant!r}")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.b < 0:
            raise ValueError("b must be nonnegative")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        if not self.r >= 1:
            raise ValueError("r must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.smoothing is not None and not self.smoothing > 0:
            raise ValueError("smoothing width must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class SolverState:
    """
    Synchronous state of all agents at time ``t``.

    ``primary`` holds ``x_i`` (centralized/consensus) or ``lambda_i`` (dual);
    ``primal`` caches the recovered ``x_i`` of the dual flow.
    """

    t: float
    primary: np.ndarray
    aux: np.ndarray
    primal: np.ndarray | None = field(default=None)

    def copy(self):
        return SolverState(self.t, self.primary.copy(), self.aux.copy(),
                           None if self.primal is None else self.primal.copy())


def sgn_pow(z, e):
    """``sign(z) |z|^e`` componentwise, with value 0 at 0 for every ``e >= 0``."""
    return np.sign(z) * np.abs(z) ** e


def phi(gain, z):
    """
    Evaluate the driving function on ``z`` (last axis = coordinates).

    Returns exactly zero at ``z = 0``.
    """
    z = np.asarray(z, dtype=float)
    if gain.variant == "power_sign":
        out = gain.a * sgn_pow(z, 1 - gain.p)
        if gain.b:
            out = out + gain.b * sgn_pow(z, gain.q)
        return out
    nrm = np.linalg.norm(z, ord=gain.r, axis=-1, keepdims=True)
    safe = np.where(nrm > 0, nrm, 1.0)
    out = gain.a * z / safe ** gain.p + gain.b * z * safe ** (gain.q - 1)
    return np.where(nrm > 0, out, 0.0)


def sign(u, eps=None):
    if eps is None:
        return np.sign(u)
    return u / (np.abs(u) + eps)


def coupling(net, X, alpha, link_noise=None, eps=None):
    """
    ``alpha * sum_j a_ij sgn(x_i - x_j)`` for every agent.

    Agent ``i`` only reads ``x_j`` for its neighbors. ``link_noise`` has one
    row per directed reading (see ``Network.directed``) and is added to the
    neighbor value before the sign is taken.
    """
    recv, send, w = net.directed
    out = np.zeros_like(X)
    if recv.size == 0 or alpha == 0:
        return out
    reading = X[send]
    if link_noise is not None:
        reading = reading + link_noise
    terms = w[:, None] * sign(X[recv] - reading, eps)
    # receiver-major order keeps the reduction sequence fixed
    np.add.at(out, recv, terms)
    return alpha * out


def rhs_centralized(model, gain, state, drift_noise=None):
    """Centralized flow; ``state`` arrays have a single row."""
    x, z, t = state.primary[0], state.aux[0], state.t
    pz = phi(gain, z)
    drift = model.grad_t(x, t)
    if drift_noise is not None:
        drift = drift + drift_noise[0]
    try:
        dx = -solve_sym(model.hess(x, t), pz + drift)
    except np.linalg.LinAlgError as exc:
        raise FlowError(f"singular Hessian at t={t}") from exc
    return dx[None, :], -pz[None, :]


def rhs_consensus(models, net, gain, state, link_noise=None, drift_noise=None):
    X, Z, t = state.primary, state.aux, state.t
    pz = phi(gain, Z)
    c = coupling(net, X, gain.alpha, link_noise, gain.smoothing)
    dx = np.empty_like(X)
    for i, m in enumerate(models):
        drift = m.grad_t(X[i], t)
        if drift_noise is not None:
            drift = drift + drift_noise[i]
        try:
            dx[i] = -solve_sym(m.hess(X[i], t), pz[i] + drift + c[i])
        except np.linalg.LinAlgError as exc:
            raise FlowError(f"singular Hessian at agent {i + 1}, t={t}") from exc
    return dx, -pz


def rhs_dual_dorap(models, profiles, net, gain, state, link_noise=None, drift_noise=None):
    """
    Dual allocation flow.

    Returns ``(dlam, dz, x)`` where ``x`` holds the recovered primal points
    ``x_i(lambda_i, t)``.
    """
    L, Z, t = state.primary, state.aux, state.t
    pz = phi(gain, Z)
    c = coupling(net, L, gain.alpha, link_noise, gain.smoothing)
    dlam = np.empty_like(L)
    X = np.empty_like(L)
    warm = state.primal
    for i, (m, prof) in enumerate(zip(models, profiles)):
        x = conjugate_argmax(m, L[i], t, x0=None if warm is None else warm[i])
        X[i] = x
        _, dual_t = dual_surfaces(m, prof, L[i], t, x=x)
        if drift_noise is not None:
            dual_t = dual_t + drift_noise[i]
        dlam[i] = -m.hess(x, t) @ (pz[i] - dual_t + c[i])
    return dlam, -pz, X


def initial_aux(flow, models, primary, profiles=None, t=0.0):
    """
    Auxiliary state required at start: ``grad f_i(x_i(0), 0)`` for the
    primal flows and ``x_i(lambda_i(0), 0) - d_i(0)`` for the dual flow.
    """
    primary = np.atleast_2d(np.asarray(primary, dtype=float))
    flow = FlowKind(flow)
    if flow is FlowKind.DUAL_DORAP:
        return np.array([conjugate_argmax(m, lam, t) - p.d(t)
                         for m, p, lam in zip(models, profiles, primary)])
    return np.array([m.grad(x, t) for m, x in zip(models, primary)])


def initial_state(flow, models, primary, profiles=None, t=0.0):
    primary = np.atleast_2d(np.asarray(primary, dtype=float)).copy()
    return SolverState(t, primary, initial_aux(flow, models, primary, profiles, t))


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"{k} must be positive and finite, got {v}")


def _check_nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0 or not math.isfinite(v):
            raise ValueError(f"{k} must be nonnegative and finite, got {v}")


def gain_bound_consensus(kappa, N, theta_hi, theta_lo, lambda2):
    """Smallest coupling gain admitted for the consensus flow:
    ``kappa * sqrt(N theta_hi / (theta_lo lambda2))``."""
    _check_nonneg(kappa=kappa)
    _check_positive(N=N, theta_hi=theta_hi, theta_lo=theta_lo, lambda2=lambda2)
    return kappa * math.sqrt(N * theta_hi / (theta_lo * lambda2))


def gain_bound_relaxed(m, varpi, a_bar, theta_hi, lambda2):
    """Gain bound under the relaxed drift-disagreement assumption:
    ``m varpi a_bar theta_hi / lambda2``."""
    _check_nonneg(varpi=varpi)
    _check_positive(m=m, a_bar=a_bar, theta_hi=theta_hi, lambda2=lambda2)
    return m * varpi * a_bar * theta_hi / lambda2


def gain_bound_dorap(kappa, delta, theta_lo, theta_hi, N, lambda2):
    """Gain bound for the dual allocation flow. The dual drift is bounded
    by ``kappa / theta_lo + delta``, which then enters the consensus bound."""
    _check_nonneg(kappa=kappa, delta=delta)
    _check_positive(theta_lo=theta_lo)
    return gain_bound_consensus(kappa / theta_lo + delta, N, theta_hi, theta_lo, lambda2)


def estimate_varpi(models, rng, n_samples=200, box=2.0, t_max=10.0):
    """
    Empirical estimate (not a certificate) of the largest
    ``||H_i^{-1} dgrad_i/dt - H_j^{-1} dgrad_j/dt||_1`` over sampled agent
    pairs and sample points in space-time.
    """
    n = models[0].dim
    best = 0.0
    for _ in range(n_samples):
        t = rng.uniform(0.0, t_max)
        i, j = rng.choice(len(models), size=2, replace=len(models) < 2)
        xi, xj = rng.uniform(-box, box, n), rng.uniform(-box, box, n)
        vi = solve_sym(models[i].hess(xi, t), models[i].grad_t(xi, t))
        vj = solve_sym(models[j].hess(xj, t), models[j].grad_t(xj, t))
        best = max(best, float(np.abs(vi - vj).sum()))
    return best
