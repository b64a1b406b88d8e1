"""
Time-varying local cost functions.

Every model exposes the four surfaces the dynamics need: value, gradient,
Hessian and the time-partial of the gradient, together with its curvature
constants ``theta_lo``/``theta_hi`` and the drift bound ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from ftopt import signals as sg

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100

# max_u |u| * sigmoid'(u); the maximizer solves u * tanh(u / 2) = 1
_U_STAR = brentq(lambda u: u * math.tanh(u / 2) - 1.0, 0.5, 3.0)
LOGISTIC_DRIFT_CONST = _U_STAR * expit(_U_STAR) * (1 - expit(_U_STAR))


class EvaluationError(ArithmeticError):
    pass


class ConvergenceError(ArithmeticError):
    def __init__(self, msg, residual=None, history=None):
        super().__init__(msg)
        self.residual = residual
        self.history = history or []


def solve_sym(H, v):
    """Solve ``H u = v`` for a small symmetric positive definite ``H``."""
    if H.shape == (1, 1):
        if H[0, 0] == 0 or not np.isfinite(H[0, 0]):
            raise np.linalg.LinAlgError("Singular matrix")
        return v / H[0, 0]
    return np.linalg.solve(H, v)


class TVCost:
    """
    Base class for a cost ``f(x, t)`` on ``R^dim``.

    Subclasses set ``dim``, ``theta_lo``, ``theta_hi`` and ``kappa`` (``None``
    when no bound on the gradient drift is known) and implement the four
    surfaces.
    """

    dim: int
    theta_lo: float
    theta_hi: float
    kappa: float | None

    def value(self, x, t):
        raise NotImplementedError

    def grad(self, x, t):
        raise NotImplementedError

    def hess(self, x, t):
        raise NotImplementedError

    def grad_t(self, x, t):
        """Partial derivative of the gradient with respect to time."""
        raise NotImplementedError

    def closed_form_argmax(self, lam, t):
        """Maximizer of ``<lam, x> - f(x, t)`` if known in closed form, else None."""
        return None


@dataclass(frozen=True, eq=False)
class QuadraticCost(TVCost):
    """``f(x, t) = 1/2 x^T A x + b(t)^T x + c(t)`` with constant SPD ``A``."""

    curvature: np.ndarray
    linear: tuple[sg.Signal, ...]
    offset: sg.Signal = sg.Signal()

    def __post_init__(self):
        lin = sg.as_vector(self.linear)
        A = np.atleast_2d(np.asarray(self.curvature, dtype=float))
        if A.shape == (1, 1) and len(lin) > 1:
            A = A[0, 0] * np.eye(len(lin))
        if A.shape != (len(lin), len(lin)):
            raise ValueError(f"curvature shape {A.shape} does not match {len(lin)} linear terms")
        if not np.allclose(A, A.T):
            raise ValueError("curvature must be symmetric")
        ev = np.linalg.eigvalsh(A)
        if ev.min() <= 0:
            raise ValueError("curvature must be positive definite")
        object.__setattr__(self, "curvature", A)
        object.__setattr__(self, "linear", lin)
        if not isinstance(self.offset, sg.Signal):
            object.__setattr__(self, "offset", sg.const(float(self.offset)))

    @property
    def dim(self):
        return len(self.linear)

    @property
    def theta_lo(self):
        return float(np.linalg.eigvalsh(self.curvature).min())

    @property
    def theta_hi(self):
        return float(np.linalg.eigvalsh(self.curvature).max())

    @property
    def kappa(self):
        return sg.vec_deriv_bound(self.linear)

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.curvature @ x + sg.vec_value(self.linear, t) @ x + self.offset(t)

    def grad(self, x, t):
        return self.curvature @ np.asarray(x, dtype=float) + sg.vec_value(self.linear, t)

    def hess(self, x, t):
        return self.curvature

    def grad_t(self, x, t):
        return sg.vec_deriv(self.linear, t)

    def closed_form_argmax(self, lam, t):
        return solve_sym(self.curvature, np.asarray(lam, dtype=float) - sg.vec_value(self.linear, t))


@dataclass(frozen=True, eq=False)
class SquaredAffineCost(TVCost):
    """``f(x, t) = 1/2 ||a x + b(t)||^2`` with scalar ``a != 0``."""

    scale: float
    drift: tuple[sg.Signal, ...]

    def __post_init__(self):
        if self.scale == 0:
            raise ValueError("scale must be nonzero")
        object.__setattr__(self, "drift", sg.as_vector(self.drift))

    @property
    def dim(self):
        return len(self.drift)

    @property
    def theta_lo(self):
        return self.scale ** 2

    theta_hi = theta_lo

    @property
    def kappa(self):
        return abs(self.scale) * sg.vec_deriv_bound(self.drift)

    def _residual(self, x, t):
        return self.scale * np.asarray(x, dtype=float) + sg.vec_value(self.drift, t)

    def value(self, x, t):
        r = self._residual(x, t)
        return 0.5 * r @ r

    def grad(self, x, t):
        return self.scale * self._residual(x, t)

    def hess(self, x, t):
        return self.scale ** 2 * np.eye(self.dim)

    def grad_t(self, x, t):
        return self.scale * sg.vec_deriv(self.drift, t)

    def closed_form_argmax(self, lam, t):
        lam = np.asarray(lam, dtype=float)
        return (lam / self.scale - sg.vec_value(self.drift, t)) / self.scale


@dataclass(frozen=True, eq=False)
class TVLogistic(TVCost):
    """
    Regularized logistic loss on a single time-varying sample.

    ``f(x, t) = log(1 + exp(-l y(t)^T x)) + beta/2 ||x||^2`` with
    ``y(t) = (1 + sin(freq t)) y0``.
    """

    label: int
    sample0: np.ndarray
    freq: float
    beta: float

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError("label must be -1 or +1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "sample0", np.asarray(self.sample0, dtype=float).ravel())

    @property
    def dim(self):
        return self.sample0.size

    @property
    def theta_lo(self):
        return float(self.beta)

    @property
    def theta_hi(self):
        # ||y(t)|| <= 2 ||y0|| and sigmoid' <= 1/4
        return float(self.beta + self.sample0 @ self.sample0)

    @property
    def kappa(self):
        return float(self.freq * np.linalg.norm(self.sample0) * (1 + LOGISTIC_DRIFT_CONST))

    def sample(self, t):
        return (1 + math.sin(self.freq * t)) * self.sample0

    def sample_rate(self, t):
        return self.freq * math.cos(self.freq * t) * self.sample0

    def value(self, x, t):
        """Also accepts a batch of points stacked along leading axes."""
        x = np.asarray(x, dtype=float)
        u = -self.label * (x @ self.sample(t))
        return np.logaddexp(0.0, u) + 0.5 * self.beta * np.sum(x * x, axis=-1)

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        y = self.sample(t)
        u = -self.label * (y @ x)
        return -self.label * expit(u) * y + self.beta * x

    def hess(self, x, t):
        x = np.asarray(x, dtype=float)
        y = self.sample(t)
        s = expit(-self.label * (y @ x))
        return s * (1 - s) * np.outer(y, y) + self.beta * np.eye(self.dim)

    def grad_t(self, x, t):
        x = np.asarray(x, dtype=float)
        y, ydot = self.sample(t), self.sample_rate(t)
        s = expit(-self.label * (y @ x))
        return -self.label * s * ydot + s * (1 - s) * (ydot @ x) * y


@dataclass(frozen=True, eq=False)
class ResourceProfile:
    """Local demand ``d_i(t)`` with the declared rate bound ``delta``."""

    demand: tuple[sg.Signal, ...]
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "demand", sg.as_vector(self.demand))
        if self.delta is None:
            object.__setattr__(self, "delta", sg.vec_deriv_bound(self.demand))
        elif self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def dim(self):
        return len(self.demand)

    def d(self, t):
        return sg.vec_value(self.demand, t)

    def d_dot(self, t):
        return sg.vec_deriv(self.demand, t)


def eval_surfaces(model, x, t):
    """Value, gradient, Hessian and gradient time-partial of ``model`` at ``(x, t)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"expected a point of shape ({model.dim},), got {x.shape}")
    out = (model.value(x, t), model.grad(x, t), model.hess(x, t), model.grad_t(x, t))
    if not all(np.all(np.isfinite(o)) for o in out):
        raise EvaluationError(f"non-finite surface at x={x.tolist()}, t={t}")
    return out


def conjugate_argmax(model, lam, t, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, x0=None):
    """
    Point ``x`` with ``grad f(x, t) = lam``, i.e. the maximizer of ``<lam, x> - f(x, t)``.

    Uses the closed form when the model has one, otherwise damped Newton
    with Armijo backtracking on ``f(x, t) - <lam, x>``.
    """
    lam = np.asarray(lam, dtype=float).reshape(model.dim)
    x = model.closed_form_argmax(lam, t)
    if x is not None:
        return x

    x = np.zeros(model.dim) if x0 is None else np.array(x0, dtype=float)
    r = model.grad(x, t) - lam
    nr = np.linalg.norm(r)
    history = [nr]
    for _ in range(max_iter):
        if nr <= tol:
            return x
        d = -solve_sym(model.hess(x, t), r)
        obj = model.value(x, t) - lam @ x
        slope = r @ d
        step = 1.0
        while True:
            xn = x + step * d
            rn = model.grad(xn, t) - lam
            nrn = np.linalg.norm(rn)
            if nrn < nr or model.value(xn, t) - lam @ xn <= obj + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                raise ConvergenceError(f"line search stalled at residual {nr:.3e}", nr, history)
        x, r, nr = xn, rn, nrn
        history.append(nr)
    if nr <= tol:
        return x
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {nr:.3e})",
                           nr, history)


def dual_surfaces(model, profile, lam, t, x=None):
    """
    Gradient of the local dual function and its time-partial.

    Returns ``(d_i(t) - x_i(lam, t), d_i'(t) + H_i^{-1} dgrad_i/dt)`` with both
    Hessian and drift evaluated at the recovered primal point.
    """
    if x is None:
        x = conjugate_argmax(model, lam, t)
    dual_grad = profile.d(t) - x
    dual_t = profile.d_dot(t) + solve_sym(model.hess(x, t), model.grad_t(x, t))
    return dual_grad, dual_t


def probe_model(model, rng, n_samples=50, box=2.0, t_max=10.0, fd_step=1e-5):
    """
    Sampled consistency checks of a model's surfaces.

    Returns a dict with the largest relative finite-difference errors of
    gradient, Hessian and time-partial, the extreme Rayleigh quotients of the
    Hessian and the largest observed ``||grad_t||``.
    """
    n = model.dim
    rep = dict(fd_grad=0.0, fd_hess=0.0, fd_time=0.0, rayleigh_min=np.inf, rayleigh_max=-np.inf,
               drift_max=0.0)
    eye = np.eye(n)
    for _ in range(n_samples):
        x = rng.uniform(-box, box, n)
        t = rng.uniform(0.0, t_max)
        g = model.grad(x, t)
        H = model.hess(x, t)
        gt = model.grad_t(x, t)
        fd_g = np.array([(model.value(x + fd_step * e, t) - model.value(x - fd_step * e, t)) / (2 * fd_step)
                         for e in eye])
        fd_H = np.column_stack([(model.grad(x + fd_step * e, t) - model.grad(x - fd_step * e, t)) / (2 * fd_step)
                                for e in eye])
        fd_t = (model.grad(x, t + fd_step) - model.grad(x, t - fd_step)) / (2 * fd_step)
        rep["fd_grad"] = max(rep["fd_grad"], np.linalg.norm(g - fd_g) / (1 + np.linalg.norm(g)))
        rep["fd_hess"] = max(rep["fd_hess"], np.linalg.norm(H - fd_H) / (1 + np.linalg.norm(H)))
        rep["fd_time"] = max(rep["fd_time"], np.linalg.norm(gt - fd_t) / (1 + np.linalg.norm(gt)))
        v = rng.standard_normal(n)
        rq = v @ H @ v / (v @ v)
        ev = np.linalg.eigvalsh(H)
        rep["rayleigh_min"] = min(rep["rayleigh_min"], rq, ev.min())
        rep["rayleigh_max"] = max(rep["rayleigh_max"], rq, ev.max())
        rep["drift_max"] = max(rep["drift_max"], np.linalg.norm(gt))
    return rep
