"""
Experiment execution: simulate, compute the reference, score, write files.

Outputs of a run (CSV column layout in ``docs/csv_schema.md``)::

    trajectory.csv  reference.csv  metrics.csv  summary.json  spec.yaml
"""

from __future__ import annotations

import copy
import csv
import json
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ftopt.config import Experiment, ExperimentSpec, build, dump_spec, parse_spec
from ftopt.flows import FlowKind, gain_bound_consensus, gain_bound_dorap
from ftopt.graph import build_incidence, lambda2_pos
from ftopt.metrics import compute_metrics, default_settling_threshold, mean_error
from ftopt.oracle import analytic_settling_time, reference_consensus, reference_dorap
from ftopt.sim import euler_run

CSV_SCHEMA_VERSION = 1
SWEEP_PARAMS = ("alpha", "h", "a", "p", "link_sigma")


class DivergenceError(ArithmeticError):
    def __init__(self, step):
        super().__init__(f"solver diverged at step {step}")
        self.step = step


@dataclass
class RunResult:
    experiment: Experiment
    traj: object
    ref: object
    metrics: object
    summary: dict


def gain_report(ex):
    """Spectral and curvature constants plus the gain bound of the configured flow."""
    out = dict(n_agents=len(ex.models), dim=ex.models[0].dim, alpha=ex.gain.alpha)
    out["theta_lo"] = min(m.theta_lo for m in ex.models)
    out["theta_hi"] = max(m.theta_hi for m in ex.models)
    kappas = [m.kappa for m in ex.models]
    out["kappa"] = None if any(k is None for k in kappas) else max(kappas)
    out["lambda2"] = out["alpha_bound"] = out["alpha_exceeds_bound"] = None
    if ex.flow is FlowKind.CENTRALIZED:
        return out
    out["lambda2"] = lambda2_pos(build_incidence(ex.net)).lambda2 if ex.net.n_edges else None
    if out["lambda2"] is None or out["kappa"] is None:
        return out
    N = len(ex.models)
    if ex.flow is FlowKind.CONSENSUS_ZGS:
        bound = gain_bound_consensus(out["kappa"], N, out["theta_hi"], out["theta_lo"], out["lambda2"])
    else:
        out["delta"] = max(p.delta for p in ex.profiles)
        bound = gain_bound_dorap(out["kappa"], out["delta"], out["theta_lo"], out["theta_hi"], N,
                                 out["lambda2"])
    out["alpha_bound"] = bound
    out["alpha_exceeds_bound"] = bool(ex.gain.alpha > bound)
    return out


def _tail_max(times, series, t_from):
    sel = times >= t_from
    return float(series[sel].max()) if sel.any() else None


def execute(spec, seed=None):
    """Run a validated spec in memory. Raises ``DivergenceError`` on blow-up."""
    ex = build(spec, seed)
    traj = euler_run(ex.flow, ex.models, ex.net, ex.gain, ex.init, ex.simcfg, ex.profiles)
    if traj.diverged:
        raise DivergenceError(traj.diverged_step)
    if ex.flow is FlowKind.DUAL_DORAP:
        ref = reference_dorap(ex.models, ex.profiles, traj.times)
    else:
        ref = reference_consensus(ex.models, traj.times)

    threshold = spec.settling.threshold
    if threshold is None:
        threshold = default_settling_threshold(ex.simcfg.h, ex.gain.a, ex.gain.alpha)
    net = ex.net if ex.flow is not FlowKind.CENTRALIZED else None
    metrics = compute_metrics(traj, ref, net, ex.models, ex.profiles, threshold, spec.settling.dwell)

    times = traj.times
    err = mean_error(traj.states, ref.x_star)
    tail = times >= times[-1] - 0.2 * (times[-1] - times[0])
    summary = dict(
        name=spec.name,
        flow=ex.flow.value,
        seed=ex.simcfg.seed,
        csv_schema_version=CSV_SCHEMA_VERSION,
        **gain_report(ex),
        h=ex.simcfg.h,
        t_end=ex.simcfg.t_end,
        steps=traj.steps,
        wall_time_s=traj.wall_time,
        wall_time_per_step_s=traj.wall_time / max(traj.steps, 1),
        settling_threshold=threshold,
        settled_at=metrics.settled_at,
        final_E_x=float(metrics.tracking[-1]),
        max_E_x_from_1s=_tail_max(times, metrics.tracking, 1.0),
        max_V1_from_1s=_tail_max(times, metrics.consensus, 1.0) if net is not None else None,
        max_mismatch_from_1s=_tail_max(times, metrics.mismatch, 1.0) if metrics.mismatch is not None else None,
        max_zgs_drift=float(metrics.zgs_drift.max()) if metrics.zgs_drift is not None else None,
        chatter_amplitude=float((metrics.consensus if net is not None else err)[tail].max()),
        max_oracle_residual=float(ref.residuals.max()),
    )
    if ex.gain.variant == "power_sign" and ex.gain.b == 0:
        summary["analytic_z_settling"] = analytic_settling_time(ex.init.aux.ravel(), ex.gain.a, ex.gain.p)
    return RunResult(ex, traj, ref, metrics, summary)


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_outputs(result, out_dir):
    """Write all files into ``out_dir`` (created if needed)."""
    out_dir = Path(out_dir)
    traj, ref, met = result.traj, result.ref, result.metrics
    K, N, n = traj.primary.shape
    prim = "lam" if traj.flow is FlowKind.DUAL_DORAP else "x"
    agents = [(i, c) for i in range(1, N + 1) for c in range(1, n + 1)]

    header = ["t"] + [f"{prim}{i}_{c}" for i, c in agents] + [f"z{i}_{c}" for i, c in agents]
    blocks = [traj.times[:, None], traj.primary.reshape(K, -1), traj.aux.reshape(K, -1)]
    if traj.primal is not None:
        header += [f"x{i}_{c}" for i, c in agents]
        blocks.append(traj.primal.reshape(K, -1))
    _write_csv(out_dir / "trajectory.csv", header, np.hstack(blocks))

    if ref.per_agent:
        header = (["t"] + [f"lamstar_{c}" for c in range(1, n + 1)]
                  + [f"xstar{i}_{c}" for i, c in agents] + ["residual"])
        blocks = [ref.times[:, None], ref.lam_star, ref.x_star.reshape(K, -1), ref.residuals[:, None]]
    else:
        header = ["t"] + [f"xstar_{c}" for c in range(1, n + 1)] + ["residual"]
        blocks = [ref.times[:, None], ref.x_star, ref.residuals[:, None]]
    _write_csv(out_dir / "reference.csv", header, np.hstack(blocks))

    cols = met.columns()
    cols["mean_error"] = mean_error(traj.states, ref.x_star)
    _write_csv(out_dir / "metrics.csv", list(cols), np.column_stack(list(cols.values())))

    (out_dir / "summary.json").write_text(json.dumps(result.summary, indent=2) + "\n")
    (out_dir / "spec.yaml").write_text(dump_spec(result.experiment.spec))


def default_out_dir(spec):
    return Path(spec.output.dir) if spec.output.dir else Path("out") / spec.name


def run_experiment(spec, out_dir=None, seed=None):
    """
    Validate and run, then write outputs.

    ``spec`` may be an ExperimentSpec, a mapping, or a path to a spec file. Files appear only
    after the whole run succeeded: they are staged in a temporary directory
    and moved into ``out_dir`` at the end.
    """
    if isinstance(spec, (str, os.PathLike)):
        from ftopt.config import load_spec
        spec = load_spec(spec)
    elif not isinstance(spec, ExperimentSpec):
        spec = parse_spec(spec)
    result = execute(spec, seed)
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir(spec)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".ftopt-", dir=out_dir.parent))
    try:
        write_outputs(result, stage)
        out_dir.mkdir(exist_ok=True)
        for f in stage.iterdir():
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    result.summary["out_dir"] = str(out_dir)
    return result


def with_param(spec, param, value):
    """Copy of ``spec`` with one sweep parameter replaced."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    raw = copy.deepcopy(spec.canonical())
    if param in ("alpha", "a", "p"):
        raw["gain"][param] = float(value)
    elif param == "h":
        # keep the recording interval fixed in time
        interval = raw["sim"]["h"] * raw["sim"]["record_every"]
        raw["sim"]["h"] = float(value)
        raw["sim"]["record_every"] = max(1, int(round(interval / float(value))))
    else:
        raw["noise"] = dict(raw.get("noise") or {"link_sigma": 0.0, "drift_sigma": 0.0})
        raw["noise"]["link_sigma"] = float(value)
    return parse_spec(raw)


def run_seed(base_seed, index):
    """Per-run seed derived from ``(base_seed, run index)``."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, np.uint64)[0])


def _sweep_one(args):
    spec_raw, param, value, index, out_dir, seed = args
    row = dict(param=param, value=value, run=index, seed=seed, status="ok", error="")
    try:
        spec = with_param(parse_spec(spec_raw), param, value)
        res = run_experiment(spec, out_dir, seed)
        for k in ("alpha", "alpha_bound", "final_E_x", "max_E_x_from_1s", "chatter_amplitude",
                  "settled_at", "wall_time_s"):
            row[k] = res.summary.get(k)
    except Exception as exc:  # a failed run is reported, the sweep goes on
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


SWEEP_COLUMNS = ("param", "value", "run", "seed", "status", "alpha", "alpha_bound", "final_E_x",
                 "max_E_x_from_1s", "chatter_amplitude", "settled_at", "wall_time_s", "error")


def sweep(spec, param, values, out_dir=None, seed=None, jobs=1):
    """
    One run per value, each in ``<out_dir>/<param>_<k>``, plus ``sweep.csv``.

    Returns the list of summary rows in input order.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    base_seed = spec.seed if seed is None else seed
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir(spec).with_name(f"{spec.name}_sweep_{param}")
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(spec.canonical(), param, float(v), k, str(out_dir / f"{param}_{k}"), run_seed(base_seed, k))
             for k, v in enumerate(values)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in SWEEP_COLUMNS})
    return rows
