"""Forward Ornstein-Uhlenbeck process with unit drift weight.

The forward SDE ``dX = -X/2 dt + dW`` has Gaussian transitions
``X_t | X_0 ~ N(alpha(t) X_0, h(t) I)`` with ``alpha(t) = exp(-t/2)`` and
``h(t) = 1 - exp(-t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "TimeSchedule",
    "alpha_h",
    "forward_kernel_sample",
    "noise_score_target",
]

_INTEGRAL_TOL = 1e-9


@dataclass(frozen=True)
class TimeSchedule:
    """Horizon ``T``, early-stopping time ``t0`` and sampler step ``eta``.

    ``(T - t0) / eta`` must be an integer: the discretised backward process
    is defined on the intervals ``[k eta, (k+1) eta]`` for ``k < K_T``.
    """

    T: float = 5.0
    t0: float = 0.1
    eta: float = 0.01
    g: float = 1.0

    def __post_init__(self):
        if self.g != 1.0:
            raise DomainError("only the unit drift weight g = 1 is supported")
        if not (np.isfinite(self.T) and np.isfinite(self.t0) and np.isfinite(self.eta)):
            raise DomainError("schedule values must be finite")
        if not 0.0 < self.t0 < self.T:
            raise DomainError(f"need 0 < t0 < T, got t0={self.t0}, T={self.T}")
        if self.eta <= 0.0:
            raise DomainError(f"step eta must be positive, got {self.eta}")
        ratio = (self.T - self.t0) / self.eta
        if abs(ratio - round(ratio)) > _INTEGRAL_TOL * max(1.0, ratio):
            raise DomainError(f"(T - t0) / eta = {ratio!r} is not an integer")

    @property
    def n_steps(self) -> int:
        """Number of backward steps ``K_T = (T - t0) / eta``."""
        return int(round((self.T - self.t0) / self.eta))

    def alpha_h(self, t):
        return alpha_h(t, T=self.T)

    def check_training_time(self, t):
        """Raise unless every entry of ``t`` lies in ``[t0, T]``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 * (1 - 1e-12)) or np.any(t > self.T * (1 + 1e-12)):
            raise DomainError(f"time outside [t0, T] = [{self.t0}, {self.T}]")
        return t

    def to_dict(self):
        return {"T": self.T, "t0": self.t0, "eta": self.eta}


def alpha_h(t, T=None):
    """Return ``(alpha(t), h(t))`` for scalar or array ``t``.

    ``t = inf`` yields the stationary limit ``(0, 1)``. When ``T`` is given,
    times beyond the horizon are rejected.
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)) or np.any(t < 0):
        raise DomainError("time must be nonnegative")
    if T is not None and np.any(t > T):
        raise DomainError(f"time exceeds horizon T={T}")
    alpha = np.exp(-0.5 * t)
    # expm1 keeps h accurate for small t
    h = -np.expm1(-t)
    if alpha.ndim == 0:
        return float(alpha), float(h)
    return alpha, h


def forward_kernel_sample(x0, t, rng, t_start=0.0):
    """Draw ``X_t`` given ``X_{t_start} = x0`` under the forward process.

    Parameters
    ----------
    x0 : array_like, shape (..., D)
        State at time ``t_start``.
    t : float or array_like broadcastable to ``x0.shape[:-1]``
        Target time, ``t >= t_start``.
    rng : numpy.random.Generator
    t_start : float, optional
        Conditioning time. The transition from ``t_start`` to ``t`` is
        ``N(alpha(t)/alpha(t_start) x0, (1 - alpha(t)^2/alpha(t_start)^2) I)``.

    Returns
    -------
    ndarray, same shape as ``x0``
        ``x0`` itself when ``t == t_start`` (degenerate kernel).
    """
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < t_start):
        raise DomainError("target time precedes conditioning time")
    if t.ndim == 0 and float(t) == t_start:
        return x0.copy()
    scale = np.exp(-0.5 * (t - t_start))
    var = -np.expm1(-(t - t_start))
    if t.ndim > 0:
        scale = scale[..., None]
        var = var[..., None]
    noise = rng.standard_normal(x0.shape)
    return scale * x0 + np.sqrt(var) * noise


def noise_score_target(x0, xt, t, schedule=None):
    """Conditional score ``grad log phi_t(xt | x0) = -(xt - alpha x0) / h``.

    This is the regression target of denoising score matching. With a
    ``schedule``, times below ``t0`` are rejected since ``1/h`` blows up.
    """
    t = np.asarray(t, dtype=float)
    if schedule is not None:
        schedule.check_training_time(t)
    elif np.any(t <= 0):
        raise DomainError("conditional score needs t > 0")
    alpha, h = alpha_h(t)
    alpha = np.asarray(alpha)
    h = np.asarray(h)
    if alpha.ndim > 0:
        alpha = alpha[..., None]
        h = h[..., None]
    return -(np.asarray(xt, dtype=float) - alpha * np.asarray(x0, dtype=float)) / h
