"""Evaluation quantities computed from a trajectory and its reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ftopt.flows import FlowKind

LOG_FLOOR = -16.0
DEFAULT_DWELL = 0.5


class GridMismatch(ValueError):
    pass


@dataclass
class MetricSeries:
    times: np.ndarray
    tracking: np.ndarray           # E_x, log10
    consensus: np.ndarray          # V1 = ||(B0^T kron I) x||_1
    grad_sum: np.ndarray | None = None   # ||sum_i grad f_i(x_i, t)||
    zgs_drift: np.ndarray | None = None  # ||sum_i grad f_i - sum_i z_i||
    mismatch: np.ndarray | None = None   # ||sum_i x_i - d(t)||
    settled_at: float | None = None

    def columns(self):
        cols = {"t": self.times, "E_x": self.tracking, "V1": self.consensus}
        if self.grad_sum is not None:
            cols["grad_sum"] = self.grad_sum
            cols["zgs_drift"] = self.zgs_drift
        if self.mismatch is not None:
            cols["mismatch"] = self.mismatch
        return cols


def mean_error(states, ref_states):
    """``(1/N) sum_i ||x_i - x_i^*||`` per sample; ``ref_states`` is (K, n) or (K, N, n)."""
    ref = ref_states[:, None, :] if ref_states.ndim == 2 else ref_states
    return np.linalg.norm(states - ref, axis=-1).mean(axis=-1)


def log_floor(err):
    with np.errstate(divide="ignore"):
        out = np.log10(err)
    return np.where(err > 0, out, LOG_FLOOR).clip(min=LOG_FLOOR)


def tracking_error(traj, ref):
    """
    ``E_x(t_k) = log10((1/N) sum_i ||x_i(t_k) - x^*(t_k)||)``, floored at -16.

    Uses per-agent references when ``ref`` is an allocation reference.
    """
    if traj.times.shape != ref.times.shape or not np.allclose(traj.times, ref.times, rtol=0, atol=1e-12):
        raise GridMismatch("trajectory and reference time grids differ")
    return log_floor(mean_error(traj.states, ref.x_star))


def zgs_residual(traj, models):
    """
    Distance proxy to the zero-gradient-sum manifold and the conservation drift.

    Returns ``(||sum_i grad f_i(x_i, t)||, ||sum_i grad f_i(x_i, t) - sum_i z_i||)``.
    """
    K = traj.times.size
    gsum = np.empty((K, traj.primary.shape[-1]))
    for k, t in enumerate(traj.times):
        gsum[k] = sum(m.grad(x, t) for m, x in zip(models, traj.primary[k]))
    return np.linalg.norm(gsum, axis=-1), np.linalg.norm(gsum - traj.aux.sum(axis=1), axis=-1)


def consensus_error(states, net):
    """``V1 = sum_{edges} a_ij ||x_i - x_j||_1`` per sample; ``states`` is (K, N, n)."""
    states = np.asarray(states, dtype=float)
    if not net.edges:
        return np.zeros(states.shape[0])
    i, j, w = (np.array(c) for c in zip(*net.edges))
    return (w[None, :] * np.abs(states[:, i, :] - states[:, j, :]).sum(axis=-1)).sum(axis=-1)


def constraint_mismatch(states, times, profiles):
    """``||sum_i x_i(t_k) - d(t_k)||`` per sample."""
    d = np.array([sum(p.d(t) for p in profiles) for t in times])
    return np.linalg.norm(np.asarray(states).sum(axis=1) - d, axis=-1)


def detect_settling(times, series, threshold, dwell=DEFAULT_DWELL):
    """
    First sample time ``t`` with ``series <= threshold`` throughout ``[t, t + dwell]``.

    Only windows that fit inside the recorded horizon count. Returns None
    when no such time exists.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if not threshold > 0 or not dwell > 0:
        raise ValueError("threshold and dwell must be positive")
    if times.size == 0 or dwell > times[-1] - times[0] + 1e-12:
        raise ValueError("dwell exceeds the recorded horizon")
    ok = series <= threshold
    # index of the first violation at or after each sample
    next_bad = np.full(times.size, times.size)
    nb = times.size
    for k in range(times.size - 1, -1, -1):
        if not ok[k]:
            nb = k
        next_bad[k] = nb
    end = times[-1] + 1e-12
    for k in range(times.size):
        if not ok[k] or times[k] + dwell > end:
            continue
        limit = times[next_bad[k]] if next_bad[k] < times.size else np.inf
        if limit > times[k] + dwell + 1e-12:
            return float(times[k])
    return None


def default_settling_threshold(h, a, alpha):
    """Empirical chattering floor ``10 h (a + alpha)``."""
    return 10.0 * h * (a + alpha)


def compute_metrics(traj, ref, net=None, models=None, profiles=None, threshold=None,
                    dwell=DEFAULT_DWELL):
    """All series for a run; ``settled_at`` is detected on the linear mean tracking error."""
    E = tracking_error(traj, ref)
    V1 = consensus_error(traj.primary, net) if net is not None else np.zeros(traj.times.size)
    out = MetricSeries(traj.times, E, V1)
    if traj.flow is not FlowKind.DUAL_DORAP and models is not None:
        out.grad_sum, out.zgs_drift = zgs_residual(traj, models)
    if traj.flow is FlowKind.DUAL_DORAP and profiles is not None:
        out.mismatch = constraint_mismatch(traj.primal, traj.times, profiles)
    if threshold is not None and traj.times.size > 1 and dwell <= traj.times[-1] - traj.times[0]:
        out.settled_at = detect_settling(traj.times, mean_error(traj.states, ref.x_star), threshold, dwell)
    return out
