"""Subspace recovery, latent distribution distances and rate fitting."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import linear_sum_assignment

from .exceptions import DomainError

__all__ = [
    "subspace_error",
    "procrustes_align",
    "ortho_lemma_check",
    "OrthoLemma",
    "w2_latent",
    "gaussian_w2",
    "tv_latent_histogram",
    "rate_fit",
    "RateFit",
    "EvalReport",
    "W2_ASSIGNMENT_CAP",
]

W2_ASSIGNMENT_CAP = 2048


def _check_pair(V, A):
    V = np.asarray(V, dtype=float)
    A = np.asarray(A, dtype=float)
    if V.shape != A.shape or V.ndim != 2:
        raise DomainError(f"shape mismatch: {V.shape} vs {A.shape}")
    return V, A


def subspace_error(V, A):
    """``|V V^T - A A^T|_F^2``; invariant to right rotations of either basis."""
    V, A = _check_pair(V, A)
    return float(np.sum((V @ V.T - A @ A.T) ** 2))


def procrustes_align(V, A):
    """Orthogonal ``U`` closest to ``V^T A`` in Frobenius norm.

    With ``V^T A = P S Q^T`` the minimiser is ``U = P Q^T``. When ``V^T A``
    is rank deficient ``U`` is not unique; a warning is issued and one
    minimiser is returned.
    """
    V, A = _check_pair(V, A)
    M = V.T @ A
    P, s, Qt = np.linalg.svd(M)
    if s.min() < 1e-8 * max(s.max(), 1.0):
        warnings.warn("V^T A is rank deficient; alignment is not unique", RuntimeWarning, stacklevel=2)
    return P @ Qt


class OrthoLemma(NamedTuple):
    eps: float
    perp_v: float  # |(I - A A^T) V|_F^2
    proj_gap: float  # |V V^T - A A^T|_F^2
    gram_gap: float  # |V^T A A^T V - I|_F^2
    align_gap: float  # |U - V^T A|_F^2
    holds: bool


def ortho_lemma_check(A, V, slack=1e-10):
    """Check the bounds implied by ``eps = |(I - V V^T) A|_F^2``.

    ``|(I - A A^T) V|^2 <= eps``, ``|V V^T - A A^T|^2 <= 2 eps``,
    ``|V^T A A^T V - I|^2 <= 2 eps`` and ``|U - V^T A|^2 <= 2 eps`` for the
    Procrustes ``U``. ``slack`` absorbs rounding.
    """
    V, A = _check_pair(V, A)
    d = A.shape[1]
    eps = float(np.sum((A - V @ (V.T @ A)) ** 2))
    perp_v = float(np.sum((V - A @ (A.T @ V)) ** 2))
    proj_gap = subspace_error(V, A)
    M = V.T @ A
    gram_gap = float(np.sum((M @ M.T - np.eye(d)) ** 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        U = procrustes_align(V, A)
    align_gap = float(np.sum((U - M) ** 2))
    tol = slack * max(1.0, eps)
    holds = (
        perp_v <= eps + tol
        and proj_gap <= 2 * eps + tol
        and gram_gap <= 2 * eps + tol
        and align_gap <= gram_gap + tol
    )
    return OrthoLemma(eps, perp_v, proj_gap, gram_gap, align_gap, bool(holds))


def w2_latent(samples_a, samples_b):
    """Exact empirical 2-Wasserstein distance between equal-size sample sets.

    ``d = 1`` uses the sorted coupling. ``d = 2`` solves the optimal
    assignment on the full cost matrix, limited to ``W2_ASSIGNMENT_CAP``
    points.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    if a.shape != b.shape:
        raise DomainError(f"sample shapes differ: {a.shape} vs {b.shape}")
    n, d = a.shape
    if d == 1:
        return float(np.sqrt(np.mean((np.sort(a[:, 0]) - np.sort(b[:, 0])) ** 2)))
    if d > 2:
        raise DomainError("exact W2 is provided for d <= 2")
    if n > W2_ASSIGNMENT_CAP:
        raise DomainError(f"n={n} exceeds the assignment cap {W2_ASSIGNMENT_CAP}")
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    # sorting makes the sum independent of argument order, so W2 is exactly symmetric
    return float(np.sqrt(np.sort(cost[rows, cols]).mean()))


def gaussian_w2(m1, S1, m2, S2):
    """Closed-form W2 between ``N(m1, S1)`` and ``N(m2, S2)``."""
    m1, m2 = np.atleast_1d(m1).astype(float), np.atleast_1d(m2).astype(float)
    S1, S2 = np.atleast_2d(S1).astype(float), np.atleast_2d(S2).astype(float)
    r = sqrtm(S1)
    cross = np.real(sqrtm(r @ S2 @ r))
    val = np.sum((m1 - m2) ** 2) + np.trace(S1 + S2 - 2 * cross)
    return float(np.sqrt(max(val, 0.0)))


def tv_latent_histogram(samples_a, samples_b, bins=64, quantiles=(1.0, 99.0)):
    """Plug-in total variation between histograms on a shared grid.

    The grid spans the pooled percentile range given by ``quantiles`` with
    ``bins`` cells per axis; points outside are counted in the edge cells.
    This is a biased estimate with a noise floor that shrinks with n.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    if a.shape[1] != b.shape[1]:
        raise DomainError("sample dimensions differ")
    d = a.shape[1]
    if d > 2:
        raise DomainError("histogram TV is provided for d <= 2")
    pooled = np.vstack([a, b])
    lo, hi = np.percentile(pooled, quantiles, axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    edges = [np.linspace(lo[i], hi[i], bins + 1) for i in range(d)]

    def hist(x):
        x = np.clip(x, lo, hi)
        counts, _ = np.histogramdd(x, bins=edges)
        return counts / x.shape[0]

    return float(0.5 * np.sum(np.abs(hist(a) - hist(b))))


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def rate_fit(xs, ys):
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise DomainError("need at least 3 paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("rate fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2))


@dataclass
class EvalReport:
    subspace_err: float
    align_U: np.ndarray
    tv_latent: float = None
    w2_latent: float = None
    ortho_second_moment: float = None
    moments: tuple = None

    def __post_init__(self):
        d = self.align_U.shape[0]
        if not 0.0 <= self.subspace_err <= 2 * d + 1e-9:
            raise DomainError("subspace error outside [0, 2d]")
        if np.max(np.abs(self.align_U.T @ self.align_U - np.eye(d))) > 1e-10:
            raise DomainError("alignment matrix is not orthogonal")

    @classmethod
    def from_bases(cls, V, A, **kw):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            U = procrustes_align(V, A)
        return cls(subspace_error(V, A), U, **kw)

    def to_dict(self):
        mom = None
        if self.moments is not None:
            mom = [np.asarray(m).tolist() if m is not None else None for m in self.moments]
        return {
            "subspace_err": self.subspace_err,
            "align_U": self.align_U.tolist(),
            "tv_latent": self.tv_latent,
            "w2_latent": self.w2_latent,
            "ortho_second_moment": self.ortho_second_moment,
            "moments": mom,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)
