"""
Ground truth for the tracking problems, computed without the flows.

* consensus: the minimizer of ``sum_i f_i(x, t)`` by damped Newton;
* allocation: the multiplier solving ``sum_i (d_i(t) - x_i(lambda, t)) = 0``
  by Newton on the dual, with the primal points read off the conjugate map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ftopt.problems import ConvergenceError, conjugate_argmax, solve_sym

ORACLE_TOL = 1e-12
MAX_ITER = 100


class OracleError(ConvergenceError):
    pass


@dataclass
class ReferenceTrajectory:
    """
    Optimal trajectory on a time grid.

    ``x_star`` has shape ``(K, n)`` for consensus problems and ``(K, N, n)``
    for allocation problems, where ``lam_star`` is ``(K, n)``.
    """

    times: np.ndarray
    x_star: np.ndarray
    lam_star: np.ndarray | None
    residuals: np.ndarray

    @property
    def per_agent(self):
        return self.x_star.ndim == 3


def _sum_grad(models, x, t):
    return sum(m.grad(x, t) for m in models)


def _sum_hess(models, x, t):
    return sum(m.hess(x, t) for m in models)


def _sum_value(models, x, t):
    return sum(m.value(x, t) for m in models)


def consensus_optimum(models, t, warm_start=None, tol=ORACLE_TOL, max_iter=MAX_ITER,
                      return_residual=False):
    """Minimizer of ``sum_i f_i(x, t)`` with ``||sum_i grad f_i|| <= tol``."""
    n = models[0].dim
    x = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=float)
    g = _sum_grad(models, x, t)
    res = np.linalg.norm(g)
    history = [res]
    for _ in range(max_iter):
        if res <= tol:
            break
        d = -solve_sym(_sum_hess(models, x, t), g)
        f0 = _sum_value(models, x, t)
        step = 1.0
        while True:
            xn = x + step * d
            gn = _sum_grad(models, xn, t)
            rn = np.linalg.norm(gn)
            if rn < res or _sum_value(models, xn, t) <= f0 + 1e-4 * step * (g @ d):
                break
            step *= 0.5
            if step < 1e-12:
                raise OracleError(f"consensus oracle stalled at t={t}", res, history)
        x, g, res = xn, gn, rn
        history.append(res)
    if res > tol:
        raise OracleError(f"consensus oracle did not converge at t={t} (residual {res:.3e})", res, history)
    return (x, res) if return_residual else x


def _dual_residual(models, profiles, lam, t, warm):
    xs = np.array([conjugate_argmax(m, lam, t, x0=None if warm is None else warm[i])
                   for i, m in enumerate(models)])
    d = sum(p.d(t) for p in profiles)
    return d - xs.sum(axis=0), xs


def _bisect_scalar(models, profiles, t, tol):
    # sum_i x_i(lam) is strictly increasing in lam
    def F(lam):
        return _dual_residual(models, profiles, np.array([lam]), t, None)[0][0]

    lo, hi = -1.0, 1.0
    while F(lo) < 0:
        lo *= 2
    while F(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return np.array([0.5 * (lo + hi)])


def dorap_optimum(models, profiles, t, warm_start=None, tol=ORACLE_TOL, max_iter=MAX_ITER):
    """
    Optimal multiplier and allocation at time ``t``.

    Returns
    -------
    lam_star : ndarray, shape (n,)
    x_star : ndarray, shape (N, n)
    residual : float
        ``||sum_i x_i - d(t)||``.
    """
    n = models[0].dim
    lam = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=float)
    r, xs = _dual_residual(models, profiles, lam, t, None)
    res = np.linalg.norm(r)
    history = [res]
    for _ in range(max_iter):
        if res <= tol:
            break
        # Jacobian of sum_i x_i(lam) is sum_i H_i^{-1}
        J = sum(np.linalg.inv(m.hess(x, t)) for m, x in zip(models, xs))
        step = 1.0
        d = solve_sym(J, r)
        while True:
            lam_n = lam + step * d
            rn_vec, xs_n = _dual_residual(models, profiles, lam_n, t, xs)
            rn = np.linalg.norm(rn_vec)
            if rn < res:
                break
            step *= 0.5
            if step < 1e-12:
                break
        if step < 1e-12:
            break
        lam, r, xs, res = lam_n, rn_vec, xs_n, rn
        history.append(res)
    if res > tol:
        if n == 1:
            lam = _bisect_scalar(models, profiles, t, 1e-15)
            r, xs = _dual_residual(models, profiles, lam, t, None)
            res = np.linalg.norm(r)
        if res > tol:
            raise OracleError(f"allocation oracle did not converge at t={t} (residual {res:.3e})",
                              res, history)
    return lam, xs, res


def kkt_residuals(models, profiles, lam, xs, t):
    """Primal feasibility and worst stationarity residual ``||grad f_i(x_i) - lam||``."""
    feas = np.linalg.norm(xs.sum(axis=0) - sum(p.d(t) for p in profiles))
    stat = max(np.linalg.norm(m.grad(x, t) - lam) for m, x in zip(models, xs))
    return feas, stat


def reference_consensus(models, times):
    xs, res = [], []
    warm = None
    for t in times:
        warm, r = consensus_optimum(models, t, warm, return_residual=True)
        xs.append(warm)
        res.append(r)
    return ReferenceTrajectory(np.asarray(times, dtype=float), np.array(xs), None, np.array(res))


def reference_dorap(models, profiles, times):
    lams, xs, res = [], [], []
    warm = None
    for t in times:
        warm, x, r = dorap_optimum(models, profiles, t, warm)
        lams.append(warm)
        xs.append(x)
        res.append(r)
    return ReferenceTrajectory(np.asarray(times, dtype=float), np.array(xs), np.array(lams), np.array(res))


def analytic_settling_time(z0, a, p):
    """
    Settling time of ``z' = -a sgn^{1-p}(z)`` from ``z0``.

    Each component reaches zero at ``|z0_j|^p / (a p)``; the largest is returned.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if not a > 0:
        raise ValueError("a must be positive")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    return float(np.max(np.abs(z0) ** p / (a * p))) if z0.size else 0.0
