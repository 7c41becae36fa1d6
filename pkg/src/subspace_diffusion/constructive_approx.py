"""Grid approximant built from a product partition of unity of trapezoids.

On the cube ``[-R, R]^d`` and times ``[0, T]`` the inputs are rescaled to
``y = (z + R) / (2R)`` and ``t' = t / T``. With grid indices
``m in {0..N1-1}^d`` and ``j in {0..N2-1}`` the approximant is

    f(z, t) = sum_{m,j} g(2R m/N1 - R, T j/N2) psi(3 N2 (t' - j/N2)) prod_i psi(3 N1 (y_i - m_i/N1))

and it is set to zero outside the cube.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, UnsupportedOracleError
from .oracle_scores import latent_score
from .score_network import MlpConfig, ScoreNetwork
from .sde_core import alpha_h

__all__ = [
    "trapezoid",
    "trapezoid_relu",
    "GridApproximant",
    "build_approximant",
    "on_support_target",
    "measure_time_lipschitz",
    "partition_of_unity_check",
    "interior_probe_grid",
    "sup_error",
    "compile_relu_1d",
]

MAX_CENTERS = 10**7


def trapezoid(a):
    """``1`` for ``|a| < 1``, ``2 - |a|`` on ``[1, 2]``, ``0`` beyond."""
    a = np.abs(np.asarray(a, dtype=float))
    return np.clip(2.0 - a, 0.0, 1.0)


def trapezoid_relu(a):
    """The same trapezoid written with four ReLUs."""
    a = np.asarray(a, dtype=float)
    r = lambda v: np.maximum(v, 0.0)  # noqa: E731
    return r(a + 2) - r(a + 1) - r(a - 1) + r(a - 2)


def on_support_target(latent):
    """``g(z, t) = h(t) grad log p_t^LD(z) + z``, the function ``f`` must learn.

    Defined down to ``t = 0`` where it reduces to ``z``.
    """

    def g(z, t):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))
        _, h = alpha_h(t)
        score = latent_score(latent, z, np.maximum(t, 1e-300))
        return h[:, None] * score + z

    g.d = latent.d
    return g


@dataclass(eq=False)
class GridApproximant:
    R: float
    N1: int
    N2: int
    T: float
    centers: np.ndarray  # shape (N1,)*d + (N2, d)
    beta: float = 1.0
    tau_hat: float = 0.0
    schedule: object = None

    @property
    def d(self):
        return self.centers.shape[-1]

    @property
    def lipschitz_budget(self):
        """``(gamma, gamma_t) = (10 d (1 + beta), 10 tau)``."""
        return 10.0 * self.d * (1.0 + self.beta), 10.0 * self.tau_hat

    @property
    def error_budget(self):
        """Sup-error budget ``2R(1+beta) sqrt(d)/N1 + T tau/N2`` on the interior."""
        return 2 * self.R * (1 + self.beta) * np.sqrt(self.d) / self.N1 + self.T * self.tau_hat / self.N2

    def axis_weights(self, z, t):
        """Trapezoid weights per spatial axis, shape (n, d, N1), and in time, (n, N2)."""
        y = (z + self.R) / (2 * self.R)
        m = np.arange(self.N1) / self.N1
        wz = trapezoid(3 * self.N1 * (y[:, :, None] - m))
        j = np.arange(self.N2) / self.N2
        wt = trapezoid(3 * self.N2 * (t[:, None] / self.T - j))
        return wz, wt

    def __call__(self, z, t):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))
        wz, wt = self.axis_weights(z, t)
        # contract the time axis first, then one spatial axis at a time
        acc = np.einsum("nj,...jk->n...k", wt, self.centers)
        for i in range(self.d):
            acc = np.einsum("nm,nm...->n...", wz[:, i, :], acc)
        acc[np.any(np.abs(z) > self.R, axis=1)] = 0.0
        return acc


def build_approximant(target, R, N1, N2, schedule, beta=1.0, tau_hat=0.0, d=None):
    """Tabulate ``target`` at all grid centers.

    ``target(z, t)`` maps (n, d) points and (n,) times to (n, d). It is
    evaluated at times ``T j / N2`` which start at ``0``, so it must be
    defined on ``[0, T]``.
    """
    d = d or getattr(target, "d", None)
    if d is None:
        raise DomainError("latent dimension unknown; pass d")
    if R <= 0 or N1 < 1 or N2 < 1:
        raise DomainError("need R > 0, N1 >= 1, N2 >= 1")
    if N1**d * N2 > MAX_CENTERS:
        raise DomainError(f"{N1**d * N2} grid centers exceed the limit of {MAX_CENTERS}")
    axis = 2 * R * np.arange(N1) / N1 - R
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    zc = np.stack([g.ravel() for g in grids], axis=-1)
    T = schedule.T
    tc = T * np.arange(N2) / N2
    Z = np.repeat(zc, N2, axis=0)
    Tt = np.tile(tc, zc.shape[0])
    vals = np.asarray(target(Z, Tt), dtype=float).reshape((N1,) * d + (N2, d))
    return GridApproximant(float(R), int(N1), int(N2), float(T), vals, float(beta), float(tau_hat), schedule)


def measure_time_lipschitz(target, R, T, n_space=41, n_time=401, d=None, step=1e-5):
    """Sup of ``|d g / d t|_2`` over a dense grid of ``[-R, R]^d x [0, T]``."""
    d = d or target.d
    axis = np.linspace(-R, R, n_space)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=-1)
    ts = np.linspace(step, T - step, n_time)
    Z = np.repeat(zs, n_time, axis=0)
    Tt = np.tile(ts, zs.shape[0])
    dg = (target(Z, Tt + step) - target(Z, Tt - step)) / (2 * step)
    # the left end is reached with a one-sided difference
    z0 = zs
    dg0 = (target(z0, np.full(len(z0), step)) - target(z0, np.zeros(len(z0)))) / step
    return float(max(np.linalg.norm(dg, axis=1).max(), np.linalg.norm(dg0, axis=1).max()))


def interior_probe_grid(approx, n_space=41, n_time=21, t_min=0.0):
    """Dense probes at least one cell from the cube and time boundaries."""
    lo, hi = -approx.R + 2 * approx.R / approx.N1, approx.R - 2 * approx.R / approx.N1
    if hi < lo:
        raise DomainError("grid too coarse to have an interior")
    axis = np.linspace(lo, hi, n_space)
    grids = np.meshgrid(*([axis] * approx.d), indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=-1)
    t_lo = max(t_min, approx.T / approx.N2)
    t_hi = approx.T * (1 - 1 / approx.N2)
    if t_hi < t_lo:
        t_hi = t_lo
    ts = np.linspace(t_lo, t_hi, n_time)
    return np.repeat(zs, ts.size, axis=0), np.tile(ts, zs.shape[0])


def partition_of_unity_check(approx, n_points, rng):
    """Max deviation of ``sum_{m,j} Psi_{m,j}`` from 1 at random interior points."""
    lo, hi = -approx.R + 2 * approx.R / approx.N1, approx.R - 2 * approx.R / approx.N1
    z = rng.uniform(lo, hi, (n_points, approx.d))
    t = rng.uniform(approx.T / approx.N2, approx.T * (1 - 1 / approx.N2), n_points)
    wz, wt = approx.axis_weights(z, t)
    total = np.prod(wz.sum(axis=2), axis=1) * wt.sum(axis=1)
    return float(np.max(np.abs(total - 1.0)))


def sup_error(approx, target, z, t):
    """``max |f(z,t) - g(z,t)|_inf`` over the given probes."""
    return float(np.max(np.abs(approx(z, t) - target(z, t))))


def compile_relu_1d(approx, t, D=2):
    """Write the fixed-time slice of a 1-D approximant as a two-layer ReLU net.

    Each trapezoid takes four hidden units. The result is a
    :class:`ScoreNetwork` with ``V = e_1`` whose MLP input weight on time is
    zero; its ``f`` equals ``approx(., t)`` on ``[-R, R]``. Outside the cube
    the approximant is cut to zero, which no continuous network reproduces.
    """
    if approx.d != 1:
        raise UnsupportedOracleError("exact ReLU compilation is implemented for d = 1 only")
    N1 = approx.N1
    wt = trapezoid(3 * approx.N2 * (t / approx.T - np.arange(approx.N2) / approx.N2))
    w = approx.centers[:, :, 0] @ wt  # slice values per spatial center
    slope = 3 * N1 / (2 * approx.R)
    shifts = np.array([2.0, 1.0, -1.0, -2.0])
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    m = np.repeat(np.arange(N1), 4)
    W1 = np.zeros((2, 4 * N1))
    W1[0] = slope
    b1 = 1.5 * N1 - 3.0 * m + np.tile(shifts, N1)
    W2 = (np.repeat(w, 4) * np.tile(signs, N1))[:, None]
    b2 = np.zeros(1)
    V = np.eye(D, 1)
    cfg = MlpConfig(depth=2, width=4 * N1)
    return ScoreNetwork(V, [W1, W2], [b1, b2], cfg, approx.schedule, "fixed")
