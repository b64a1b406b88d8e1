"""
Builtin experiment specs.

``case1`` / ``case1_noise``: 12-agent time-varying logistic regression under
the consensus flow. ``case2``: 12-agent quadratic allocation with
time-varying demand under the dual flow. ``smoke_centralized``: single-agent
quadratic tracker for the centralized flow.

Random choices (regularizers, labels, samples, initial states) are drawn from
the seed when the spec is generated and written into it explicitly, so an
emitted spec reproduces the run without the generator.
"""

from __future__ import annotations

import math

import numpy as np

from ftopt.config import parse_spec

DEFAULT_SEED = 2023
N_AGENTS = 12
BUILTIN_NAMES = ("case1", "case1_noise", "case2", "smoke_centralized")


def _sin(amp, freq, phase=0.0):
    return {"const": 0.0, "slope": 0.0, "waves": [{"kind": "sin", "amp": amp, "freq": freq, "phase": phase}]}


def _cos(amp, freq, phase=0.0):
    return {"const": 0.0, "slope": 0.0, "waves": [{"kind": "cos", "amp": amp, "freq": freq, "phase": phase}]}


def _case1(seed):
    rng = np.random.default_rng(seed)
    betas = rng.integers(1, 9, N_AGENTS)
    labels = rng.choice([-1, 1], N_AGENTS)
    samples = rng.uniform(0.0, 1.0, (N_AGENTS, 2))
    x0 = rng.uniform(0.0, 1.0, (N_AGENTS, 2))
    agents = [{"label": int(l), "sample0": [float(v) for v in y], "freq": math.pi / 10, "beta": float(b)}
              for l, y, b in zip(labels, samples, betas)]
    return {
        "name": "case1",
        "seed": seed,
        "flow": "consensus_zgs",
        "network": {"builtin": "ring_chords_12"},
        "problem": {"family": "logistic", "agents": agents},
        "gain": {"variant": "power_sign", "a": 10.0, "b": 0.0, "p": 0.5, "alpha": 4.0},
        "sim": {"h": 0.4e-3, "t_end": 5.0, "record_every": 25},
        "init": {"primary": x0.tolist()},
    }


def _case2(seed):
    rng = np.random.default_rng(seed)
    agents, demands = [], []
    for i in range(1, N_AGENTS + 1):
        agents.append({
            "curvature": 2 + 0.1 * i,
            "linear": [_sin(1.0, 0.1 * i)],
            "offset": _sin(1.0, 0.6 * i),
        })
        d = _sin(1.0, 1.0, i * math.pi / N_AGENTS)
        d["const"] = float(i)
        demands.append([d])
    lam0 = rng.uniform(0.0, 1.0, (N_AGENTS, 1))
    return {
        "name": "case2",
        "seed": seed,
        "flow": "dual_dorap",
        "network": {"builtin": "ring_chords_12"},
        "problem": {"family": "quadratic", "agents": agents, "demands": demands},
        "gain": {"variant": "power_sign", "a": 10.0, "b": 0.0, "p": 0.5, "alpha": 5.0},
        "sim": {"h": 0.2e-3, "t_end": 5.0, "record_every": 50},
        "init": {"primary": lam0.tolist()},
    }


def _smoke_centralized(seed):
    # f(x, t) = 1/2 ||x - r(t)||^2 with r(t) = (sin t, cos t)
    return {
        "name": "smoke_centralized",
        "seed": seed,
        "flow": "centralized",
        "network": {"builtin": "single"},
        "problem": {"family": "quadratic",
                    "agents": [{"curvature": 1.0, "linear": [_sin(-1.0, 1.0), _cos(-1.0, 1.0)], "offset": 0.5}]},
        "gain": {"variant": "power_sign", "a": 5.0, "b": 0.0, "p": 0.5, "alpha": 0.0},
        "sim": {"h": 1e-4, "t_end": 5.0, "record_every": 10},
        "init": {"primary": [[4.0, -8.0]]},
    }


def builtin_raw(name, seed=None):
    seed = DEFAULT_SEED if seed is None else int(seed)
    if name == "case1":
        return _case1(seed)
    if name == "case1_noise":
        raw = _case1(seed)
        raw["name"] = "case1_noise"
        # N(0, 1e-4) on every link reading and on every drift reading
        raw["noise"] = {"link_sigma": 1e-2, "drift_sigma": 1e-2}
        return raw
    if name == "case2":
        return _case2(seed)
    if name == "smoke_centralized":
        return _smoke_centralized(seed)
    raise KeyError(f"unknown builtin scenario {name!r}; known: {', '.join(BUILTIN_NAMES)}")


def builtin_scenario(name, seed=None):
    """Validated ExperimentSpec for a builtin scenario."""
    return parse_spec(builtin_raw(name, seed))
