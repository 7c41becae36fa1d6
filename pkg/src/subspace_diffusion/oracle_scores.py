"""Ground-truth score fields for subspace data and checks of score identities.

Every score returned here is split into the on-support part, which lives in
``span(A)`` and carries the latent law, and the orthogonal part
``-(I - A A^T) x / h(t)``, which is the same for every latent law.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .exceptions import DomainError, UnsupportedOracleError
from .sde_core import alpha_h
from .subspace_data import latent_moments, sample_latent

__all__ = [
    "DecomposedScore",
    "QuadratureGrid",
    "latent_score",
    "gaussian_score",
    "mixture_score",
    "oracle_score",
    "oracle_score_field",
    "quadrature_score",
    "quadrature_log_density",
    "score_moment_identity",
    "score_second_moment",
    "conditional_cov_check",
    "gaussian_tail_check",
    "forward_latent_sample",
]


@dataclass(frozen=True)
class DecomposedScore:
    s_par: np.ndarray
    s_perp: np.ndarray
    total: np.ndarray
    narrow_grid: bool = False

    @classmethod
    def from_parts(cls, s_par, s_perp, narrow_grid=False):
        return cls(s_par, s_perp, s_par + s_perp, narrow_grid)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform tensor grid over the latent space.

    ``n_nodes`` is the minimum number of nodes per axis and ``width`` the
    half-width in latent standard deviations. The spacing is refined further
    so that the posterior of ``z`` given the noisy latent is resolved by at
    least ``resolution`` nodes per posterior standard deviation.
    """

    n_nodes: int = 200
    width: float = 8.0
    resolution: float = 1.5
    max_nodes_per_axis: int = 4000


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("score oracles need t > 0")
    return t


def _col(v):
    v = np.asarray(v, dtype=float)
    return v[..., None] if v.ndim > 0 else v


def _orthogonal_part(A, x, h):
    x = np.asarray(x, dtype=float)
    return -(x - (x @ A) @ A.T) / _col(h)


def latent_score(latent, z, t):
    """Closed-form ``grad log p_t^LD(z)`` for the built-in latent families.

    ``p_t^LD`` is the latent law pushed through the forward kernel, a mixture
    of ``N(alpha mu_k, alpha^2 diag(var) + h I)``.
    """
    t = _check_time(t)
    alpha, h = alpha_h(t)
    alpha, h = _col(alpha), _col(h)
    z = np.asarray(z, dtype=float)
    # component variances per axis, shape (..., d) broadcast against (k, d)
    var_t = alpha**2 * latent.variances + h
    if np.ndim(var_t) > 1:
        var_t = var_t[..., None, :]
        alpha_k = alpha[..., None, :]
    else:
        alpha_k = alpha
    diff = z[..., None, :] - alpha_k * latent.means
    quad = np.sum(diff**2 / var_t, axis=-1) + np.sum(np.log(var_t), axis=-1)
    logits = np.log(latent.weights) - 0.5 * quad
    logits = logits - logits.max(axis=-1, keepdims=True)
    resp = np.exp(logits)
    resp /= resp.sum(axis=-1, keepdims=True)
    return -np.sum(resp[..., None] * diff / var_t, axis=-2)


def gaussian_score(model, t, x):
    """Closed-form score for a diagonal Gaussian latent.

    ``s_par = -A Sigma_t^{-1} A^T x`` with ``Sigma_t = diag(alpha^2 var_k + h)``
    and ``s_perp = -(I - A A^T) x / h``.
    """
    if model.latent.kind != "gaussian_diag":
        raise UnsupportedOracleError("gaussian_score needs a gaussian_diag latent")
    t = _check_time(t)
    alpha, h = alpha_h(t)
    sigma_t = _col(alpha) ** 2 * model.latent.variances + _col(h)
    x = np.asarray(x, dtype=float)
    s_par = -((x @ model.A) / sigma_t) @ model.A.T
    return DecomposedScore.from_parts(s_par, _orthogonal_part(model.A, x, h))


def mixture_score(model, t, x):
    """Closed-form score for a Gaussian-mixture latent (responsibility weighted)."""
    if model.latent.kind != "gaussian_mixture":
        raise UnsupportedOracleError("mixture_score needs a gaussian_mixture latent")
    t = _check_time(t)
    _, h = alpha_h(t)
    x = np.asarray(x, dtype=float)
    s_par = latent_score(model.latent, x @ model.A, t) @ model.A.T
    return DecomposedScore.from_parts(s_par, _orthogonal_part(model.A, x, h))


def oracle_score(model, t, x):
    """Dispatch to the closed-form oracle for the model's latent family."""
    if model.latent.kind == "gaussian_diag":
        return gaussian_score(model, t, x)
    return mixture_score(model, t, x)


def oracle_score_field(model):
    """Return the exact score as a plain ``(x, t) -> ndarray`` callable."""

    def field(x, t):
        return oracle_score(model, t, x).total

    return field


# -- quadrature oracle ---------------------------------------------------------


def _latent_grid(latent, t, grid):
    alpha, h = alpha_h(float(t))
    sd = np.sqrt(latent.variances)
    post_sd = 1.0 / np.sqrt(1.0 / latent.variances + alpha**2 / h)
    axes = []
    for i in range(latent.d):
        lo = latent.means[:, i].min() - grid.width * sd[i]
        hi = latent.means[:, i].max() + grid.width * sd[i]
        spacing = post_sd[i] / grid.resolution
        n = max(grid.n_nodes, int(np.ceil((hi - lo) / spacing)) + 1)
        if n > grid.max_nodes_per_axis:
            raise DomainError(f"quadrature would need {n} nodes per axis; t={t} is too small")
        axes.append(np.linspace(lo, hi, n))
    return axes, post_sd


def _quadrature_moments(latent, t, zprime, grid):
    """Return log p_t^LD, posterior mean and a narrow-grid flag at each row of zprime."""
    alpha, h = alpha_h(float(t))
    axes, post_sd = _latent_grid(latent, t, grid)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    cell = np.prod([ax[1] - ax[0] for ax in axes])
    # trapezoid end weights
    w1d = []
    for ax in axes:
        w = np.ones(ax.size)
        w[0] = w[-1] = 0.5
        w1d.append(w)
    log_wts = np.log(np.prod(np.meshgrid(*w1d, indexing="ij"), axis=0).ravel() * cell)
    log_prior = latent.log_density(nodes) + log_wts
    d = latent.d
    zprime = np.atleast_2d(zprime)
    log_p = np.empty(zprime.shape[0])
    mean = np.empty_like(zprime)
    narrow = False
    lo = np.array([ax[0] for ax in axes])
    hi = np.array([ax[-1] for ax in axes])
    for start in range(0, zprime.shape[0], 64):
        zp = zprime[start:start + 64]
        sq = np.sum((zp[:, None, :] - alpha * nodes[None, :, :]) ** 2, axis=-1)
        logw = log_prior[None, :] - sq / (2 * h)
        m = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - m)
        tot = w.sum(axis=1)
        log_p[start:start + 64] = m[:, 0] + np.log(tot) - 0.5 * d * np.log(2 * np.pi * h)
        mu = (w @ nodes) / tot[:, None]
        mean[start:start + 64] = mu
        if np.any(mu - lo < 6 * post_sd) or np.any(hi - mu < 6 * post_sd):
            narrow = True
    return log_p, mean, narrow


def quadrature_score(model, t, x, grid=None):
    """Score by deterministic tensor-product quadrature of the latent integral.

    Evaluates ``p_t^LD(z') = int phi_t(z'|z) p_z(z) dz`` and its gradient
    ``int -(z' - alpha z)/h phi_t(z'|z) p_z(z) dz`` on a uniform grid
    (trapezoid rule, spectrally accurate for these smooth integrands).
    Independent of the closed-form oracles; limited to ``d <= 2``.
    ``t`` must be a scalar.
    """
    grid = grid or QuadratureGrid()
    if model.d > 2:
        raise UnsupportedOracleError("quadrature oracle is limited to d <= 2")
    if np.ndim(t) != 0:
        raise DomainError("quadrature_score takes a scalar time")
    t = float(_check_time(t))
    alpha, h = alpha_h(t)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    zp = X @ model.A
    _, post_mean, narrow = _quadrature_moments(model.latent, t, zp, grid)
    s_ld = (alpha * post_mean - zp) / h
    if narrow:
        warnings.warn("quadrature grid may not cover the posterior mass", RuntimeWarning, stacklevel=2)
    s_par = s_ld @ model.A.T
    s_perp = _orthogonal_part(model.A, X, h)
    if single:
        s_par, s_perp = s_par[0], s_perp[0]
    return DecomposedScore.from_parts(s_par, s_perp, narrow)


def quadrature_log_density(model, t, x, grid=None):
    """``log p_t(x)`` with the latent integral done by quadrature.

    ``p_t(x) = p_t^LD(A^T x) * N((I - A A^T) x; 0, h I_{D-d})``.
    """
    grid = grid or QuadratureGrid()
    if model.d > 2:
        raise UnsupportedOracleError("quadrature oracle is limited to d <= 2")
    t = float(_check_time(t))
    _, h = alpha_h(t)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    zp = X @ model.A
    log_ld, _, _ = _quadrature_moments(model.latent, t, zp, grid)
    perp = X - zp @ model.A.T
    k = model.D - model.d
    out = log_ld - np.sum(perp**2, axis=-1) / (2 * h) - 0.5 * k * np.log(2 * np.pi * h)
    return out[0] if x.ndim == 1 else out


# -- score identities ------------------------------------------------------------


class MomentIdentity(NamedTuple):
    estimate: np.ndarray
    se: np.ndarray
    deviation: np.ndarray


class SecondMoment(NamedTuple):
    estimate: float
    se: float
    bound: float


def forward_latent_sample(latent, t, n, rng, return_initial=False):
    """Draw ``Z_t = alpha(t) z0 + sqrt(h(t)) xi`` with ``z0 ~ P_z``."""
    alpha, h = alpha_h(t)
    z0 = sample_latent(latent, n, rng)
    zt = alpha * z0 + np.sqrt(h) * rng.standard_normal(z0.shape)
    return (zt, z0) if return_initial else zt


def score_moment_identity(model, t, n_mc, rng):
    """Monte Carlo estimate of ``E[grad log p_t^LD(Z_t) Z_t^T]``.

    The population value is ``-I_d`` for every latent law. Returns the
    estimate, entrywise standard errors and the deviation from ``-I_d``.
    """
    latent = getattr(model, "latent", model)
    zt = forward_latent_sample(latent, t, n_mc, rng)
    s = latent_score(latent, zt, t)
    prod = s[:, :, None] * zt[:, None, :]
    est = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(n_mc)
    return MomentIdentity(est, se, est + np.eye(latent.d))


def score_second_moment(model, t, n_mc, rng):
    """Monte Carlo ``E|grad log p_t^LD|^2`` and the bound ``min{C_E/(1-h), d/h}``."""
    latent = getattr(model, "latent", model)
    _, h = alpha_h(t)
    zt = forward_latent_sample(latent, t, n_mc, rng)
    sq = np.sum(latent_score(latent, zt, t) ** 2, axis=-1)
    moments = latent_moments(latent, rng=rng)
    bound = min(moments.C_E / (1.0 - h), latent.d / h)
    return SecondMoment(float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_mc)), float(bound))


def conditional_cov_check(model, t):
    """Operator norm of ``Cov(z | z')`` and the bound ``(h^2/alpha^2)(beta + 1/h)``.

    For a diagonal Gaussian latent the posterior covariance is
    ``(alpha^2/h I + Sigma^{-1})^{-1}``.
    """
    latent = getattr(model, "latent", model)
    if latent.kind != "gaussian_diag":
        raise UnsupportedOracleError("closed-form posterior covariance needs gaussian_diag")
    alpha, h = alpha_h(float(_check_time(t)))
    cov = 1.0 / (alpha**2 / h + 1.0 / latent.variances)
    bound = h**2 / alpha**2 * (latent.beta + 1.0 / h)
    return float(cov.max()), float(bound)


class TailCheck(NamedTuple):
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    in_regime: bool

    @property
    def holds(self):
        # quadrature is accurate to ~1e-13; the second bound can be attained with equality
        return self.lhs1 <= self.rhs1 * (1 + 1e-10) and self.lhs2 <= self.rhs2 * (1 + 1e-10)


def gaussian_tail_check(d, C, R):
    """Radial quadrature of Gaussian tail integrals against their upper bounds.

    ``lhs1 = int_{|x|>R} exp(-C|x|^2/2)`` and ``lhs2`` the same with an extra
    ``|x|^2``; bounds ``2 d pi^{d/2} / (C Gamma(d/2+1)) R^{d-2} exp(-C R^2/2)``
    and ``... R^d exp(-C R^2/2)``. ``in_regime`` reports ``C R^2 >= 2d``, a
    sufficient condition for both bounds; outside it the bounds may still hold.
    """
    if d < 1 or C <= 0 or R <= 0:
        raise DomainError("need d >= 1, C > 0, R > 0")
    sphere = d * np.pi ** (d / 2) / special.gamma(d / 2 + 1)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    i1, _ = integrate.quad(lambda r: r ** (d - 1) * np.exp(-C * r * r / 2), R, np.inf, **opts)
    i2, _ = integrate.quad(lambda r: r ** (d + 1) * np.exp(-C * r * r / 2), R, np.inf, **opts)
    pref = 2 * d * np.pi ** (d / 2) / (C * special.gamma(d / 2 + 1))
    tail = np.exp(-C * R * R / 2)
    return TailCheck(
        float(sphere * i1),
        float(pref * R ** (d - 2) * tail),
        float(sphere * i2),
        float(pref * R**d * tail),
        bool(C * R * R >= 2 * d),
    )
