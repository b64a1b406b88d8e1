"""
Closed-form scalar time signals with exact derivatives.

A signal is ``const + slope * t + sum_k amp_k * trig_k(freq_k * t + phase_k)``
where ``trig_k`` is ``sin`` or ``cos``. Vector signals are tuples of scalar
signals, one per component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Wave:
    kind: str = "sin"
    amp: float = 1.0
    freq: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"unknown wave kind {self.kind!r}")


@dataclass(frozen=True)
class Signal:
    const: float = 0.0
    slope: float = 0.0
    waves: tuple[Wave, ...] = field(default=())

    def __call__(self, t):
        v = self.const + self.slope * t
        for w in self.waves:
            arg = w.freq * t + w.phase
            v += w.amp * (math.sin(arg) if w.kind == "sin" else math.cos(arg))
        return v

    def deriv(self, t):
        v = self.slope
        for w in self.waves:
            arg = w.freq * t + w.phase
            v += w.amp * w.freq * (math.cos(arg) if w.kind == "sin" else -math.sin(arg))
        return v

    def deriv_bound(self):
        """Upper bound on ``|deriv(t)|`` over all ``t``."""
        return abs(self.slope) + sum(abs(w.amp * w.freq) for w in self.waves)

    def scaled(self, c):
        return Signal(c * self.const, c * self.slope,
                      tuple(Wave(w.kind, c * w.amp, w.freq, w.phase) for w in self.waves))


def sin(amp=1.0, freq=1.0, phase=0.0):
    return Signal(waves=(Wave("sin", amp, freq, phase),))


def cos(amp=1.0, freq=1.0, phase=0.0):
    return Signal(waves=(Wave("cos", amp, freq, phase),))


def const(c):
    return Signal(const=c)


def linear(slope, c=0.0):
    return Signal(const=c, slope=slope)


def as_vector(sig):
    """Promote a scalar signal or a sequence of signals to a tuple."""
    if isinstance(sig, Signal):
        return (sig,)
    return tuple(sig)


def vec_value(sigs, t):
    return np.array([s(t) for s in sigs])


def vec_deriv(sigs, t):
    return np.array([s.deriv(t) for s in sigs])


def vec_deriv_bound(sigs):
    """Bound on the Euclidean norm of the vector derivative."""
    return math.sqrt(sum(s.deriv_bound() ** 2 for s in sigs))
