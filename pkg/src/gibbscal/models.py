"""Built-in forward models.

``ToyTruth`` and the linear model reproduce the misspecified-slope toy
problem. ``VelocityCurve`` is a cheap analytic stand-in for a velocity-history
simulator: a sum of logistic ramps whose amplitude and arrival time depend on
the calibration parameters.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import ForwardModel, LinearModel
from .errors import ConfigurationError


@dataclass(frozen=True)
class ToyTruth(ForwardModel):
    """``theta * x / (1 + x / a)``; the true process of the toy problem."""

    a: float = 20.0
    theta_bounds: tuple = ((-np.inf, np.inf),)
    param_names: tuple = ("theta",)

    def eval(self, x, theta):
        x = np.asarray(x, dtype=float)
        return theta[0] * x / (1.0 + x / self.a)


@dataclass(frozen=True)
class VelocityCurve(ForwardModel):
    """Two-wave velocity history at a sample/window interface.

    With parameters ``(k,)`` or ``(k, b)``::

        scale  = 1 + gain * (k - k_ref)
        arrive = delay * (1 - lag * (k - k_ref)) * sqrt(b_ref / b)
        v(t)   = peak * scale * [ expit((t - arrive) / rise)
                                  + plateau * expit((t - arrive - gap) / rise2) ]

    When ``b`` is not calibrated it is held at ``b_ref``.
    """

    peak: float = 300.0
    delay: float = 0.25
    gap: float = 0.3
    rise: float = 0.04
    rise2: float = 0.06
    plateau: float = 0.5
    gain: float = 0.15
    lag: float = 0.05
    k_ref: float = 3.9
    b_ref: float = 185.0
    theta_bounds: tuple = ((2.9, 4.9),)
    param_names: tuple = ("B0p",)

    def eval(self, x, theta):
        t = np.asarray(x, dtype=float)
        k = theta[0]
        b = theta[1] if len(theta) > 1 else self.b_ref
        scale = 1.0 + self.gain * (k - self.k_ref)
        arrive = self.delay * (1.0 - self.lag * (k - self.k_ref)) * np.sqrt(self.b_ref / b)
        first = expit((t - arrive) / self.rise)
        second = expit((t - arrive - self.gap) / self.rise2)
        return self.peak * scale * (first + self.plateau * second)


def velocity_2d(**kw):
    """``VelocityCurve`` calibrating both ``B0p`` and ``B0``."""
    kw.setdefault("theta_bounds", ((2.9, 4.9), (155.0, 215.0)))
    kw.setdefault("param_names", ("B0p", "B0"))
    return VelocityCurve(**kw)


def _linear(powers=(1,), bounds=None):
    powers = tuple(powers)
    if bounds is None:
        bounds = tuple((-np.inf, np.inf) for _ in powers)
    return LinearModel(powers, tuple(tuple(b) for b in bounds), tuple(f"theta{i}" for i in range(len(powers))) if len(powers) > 1 else ("theta",))


def _velocity(**kw):
    for key in ("theta_bounds",):
        if key in kw:
            kw[key] = tuple(tuple(b) for b in kw[key])
    if "param_names" in kw:
        kw["param_names"] = tuple(kw["param_names"])
    return VelocityCurve(**kw)


def _velocity2(**kw):
    if "theta_bounds" in kw:
        kw["theta_bounds"] = tuple(tuple(b) for b in kw["theta_bounds"])
    return velocity_2d(**kw)


REGISTRY = {
    "linear": _linear,
    "toy-truth": ToyTruth,
    "velocity": _velocity,
    "velocity-2d": _velocity2,
}


def build_model(name, params=None):
    """Instantiate a registered model by name with keyword ``params``."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}; choose from {sorted(REGISTRY)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model {name!r}: {exc}") from None
