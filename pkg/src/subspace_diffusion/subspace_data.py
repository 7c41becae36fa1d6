"""Linear-subspace data ``x = A z`` and the latent families used throughout."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError, InvariantError

__all__ = [
    "LatentDistribution",
    "SubspaceModel",
    "LatentMoments",
    "random_orthonormal",
    "sample_latent",
    "sample_data",
    "latent_moments",
]

_ORTHO_TOL = 1e-10


class LatentMoments(NamedTuple):
    C_E: float
    c0: float
    C_z: float
    C_E_se: float = 0.0


@dataclass(frozen=True, eq=False)
class LatentDistribution:
    """Latent law ``P_z``: a diagonal Gaussian or a Gaussian mixture.

    For ``gaussian_diag`` only ``variances`` is used (mean zero). For
    ``gaussian_mixture`` the components share the diagonal covariance
    ``diag(variances)`` and have means ``means[k]`` and weights ``weights[k]``.
    """

    kind: str
    variances: np.ndarray
    weights: np.ndarray = field(default=None)
    means: np.ndarray = field(default=None)

    def __post_init__(self):
        var = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if var.ndim != 1 or var.size < 1:
            raise InvariantError("latent.variances", "need a 1-D array of variances")
        if np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise InvariantError("latent.positive_variances", "variances must be > 0")
        object.__setattr__(self, "variances", var)
        if self.kind == "gaussian_diag":
            object.__setattr__(self, "weights", np.ones(1))
            object.__setattr__(self, "means", np.zeros((1, var.size)))
        elif self.kind == "gaussian_mixture":
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
            mu = np.atleast_2d(np.asarray(self.means, dtype=float))
            if mu.shape != (w.size, var.size):
                raise InvariantError(
                    "latent.mixture_shapes",
                    f"means shape {mu.shape} does not match ({w.size}, {var.size})",
                )
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvariantError("latent.mixture_weights", "weights must be positive and sum to 1")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "means", mu)
        else:
            raise InvariantError("latent.kind", f"unknown latent kind {self.kind!r}")

    @classmethod
    def gaussian(cls, variances):
        return cls("gaussian_diag", variances)

    @classmethod
    def mixture(cls, weights, means, variances):
        return cls("gaussian_mixture", variances, weights=weights, means=means)

    @property
    def d(self) -> int:
        return self.variances.size

    @property
    def beta(self) -> float:
        """Lipschitz constant ``max(1/min_k var_k, 1)`` of the on-support score.

        For the diagonal Gaussian this bounds the operator norm of the
        on-support score map at every time.
        """
        return float(max(1.0 / self.variances.min(), 1.0))

    def second_moment_matrix(self):
        """``E[z z^T]``, exact for both families."""
        mm = np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        return mm + np.diag(self.variances)

    def log_density(self, z):
        """Log density at points ``z`` of shape (..., d)."""
        z = np.asarray(z, dtype=float)
        diff = z[..., None, :] - self.means
        quad = np.sum(diff**2 / self.variances, axis=-1)
        log_norm = -0.5 * (self.d * np.log(2 * np.pi) + np.sum(np.log(self.variances)))
        comp = np.log(self.weights) + log_norm - 0.5 * quad
        cmax = comp.max(axis=-1, keepdims=True)
        return (cmax + np.log(np.exp(comp - cmax).sum(axis=-1, keepdims=True)))[..., 0]

    def score(self, z):
        """``grad log p_z`` at ``z`` (closed form via responsibilities)."""
        z = np.asarray(z, dtype=float)
        diff = z[..., None, :] - self.means
        quad = np.sum(diff**2 / self.variances, axis=-1)
        logits = np.log(self.weights) - 0.5 * quad
        logits -= logits.max(axis=-1, keepdims=True)
        resp = np.exp(logits)
        resp /= resp.sum(axis=-1, keepdims=True)
        return -np.einsum("...k,...ki->...i", resp, diff) / self.variances

    def tail_constants(self):
        """Sub-Gaussian tail constants ``(B, C1, C2)`` for the diagonal Gaussian.

        ``p_z(z) <= (2 pi)^{-d/2} C1 exp(-C2 |z|^2 / 2)`` for ``|z| >= B``.
        Reported only; nothing downstream enforces them.
        """
        if self.kind != "gaussian_diag":
            raise DomainError("tail constants are only tabulated for gaussian_diag")
        return 0.0, float(np.prod(self.variances) ** -0.5), float(1.0 / self.variances.max())

    def to_dict(self):
        out = {"kind": self.kind, "variances": self.variances.tolist()}
        if self.kind == "gaussian_mixture":
            out["weights"] = self.weights.tolist()
            out["means"] = self.means.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = data.pop("kind")
        variances = data.pop("variances")
        if kind == "gaussian_diag":
            if data:
                raise InvariantError("latent.keys", f"unexpected keys {sorted(data)}")
            return cls(kind, variances)
        weights = data.pop("weights")
        means = data.pop("means")
        if data:
            raise InvariantError("latent.keys", f"unexpected keys {sorted(data)}")
        return cls(kind, variances, weights=weights, means=means)


@dataclass(frozen=True, eq=False)
class SubspaceModel:
    """Data model ``x = A z`` with ``A`` of shape (D, d), orthonormal columns."""

    A: np.ndarray
    latent: LatentDistribution

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            raise InvariantError("model.shape", "A must be a matrix")
        D, d = A.shape
        if d < 1 or D <= d:
            raise InvariantError("model.dims", f"need 1 <= d < D, got D={D}, d={d}")
        if d != self.latent.d:
            raise InvariantError("model.latent_dim", f"A has {d} columns, latent has dim {self.latent.d}")
        err = np.linalg.norm(A.T @ A - np.eye(d))
        if not err <= _ORTHO_TOL:
            raise InvariantError("model.orthonormal_columns", f"|A^T A - I|_F = {err:.3e}")
        A = A.copy()
        A.flags.writeable = False
        object.__setattr__(self, "A", A)

    @property
    def D(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def projector(self):
        return self.A @ self.A.T

    def to_dict(self):
        return {
            "D": self.D,
            "d": self.d,
            "A": self.A.ravel(order="C").tolist(),
            "latent": self.latent.to_dict(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        D, d = int(data["D"]), int(data["d"])
        A = np.asarray(data["A"], dtype=float).reshape(D, d)
        return cls(A, LatentDistribution.from_dict(data["latent"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def random_orthonormal(D, d, rng):
    """Haar-distributed ``D x d`` matrix with orthonormal columns.

    Orthonormalises a Gaussian matrix by QR and fixes column signs so the
    law is invariant under left rotations.
    """
    if not 1 <= d < D:
        raise DomainError(f"need 1 <= d < D, got D={D}, d={d}")
    G = rng.standard_normal((D, d))
    Q, R = np.linalg.qr(G)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def sample_latent(latent, n, rng):
    """Draw ``n`` i.i.d. latent vectors, shape (n, d)."""
    if n < 1:
        raise DomainError("need n >= 1")
    noise = rng.standard_normal((n, latent.d)) * np.sqrt(latent.variances)
    if latent.kind == "gaussian_diag":
        return noise
    labels = rng.choice(latent.weights.size, size=n, p=latent.weights)
    return latent.means[labels] + noise


def sample_data(model, n, rng, return_latent=False):
    """Draw ``n`` ambient points ``x_i = A z_i``, shape (n, D)."""
    z = sample_latent(model.latent, n, rng)
    x = z @ model.A.T
    return (x, z) if return_latent else x


def latent_moments(latent, rng=None, n_mc=200_000):
    """Constants ``(C_E, c0, C_z)`` of the latent law.

    ``C_E = E|grad log p_z|^2``, ``c0 = lambda_min(E[z z^T])`` and
    ``C_z = E|z|^2``. Everything is exact for the diagonal Gaussian. For a
    mixture ``c0`` and ``C_z`` are still exact while ``C_E`` is a Monte Carlo
    estimate whose standard error is returned as ``C_E_se``.
    """
    second = latent.second_moment_matrix()
    c0 = float(np.linalg.eigvalsh(second).min())
    C_z = float(np.trace(second))
    if latent.kind == "gaussian_diag":
        return LatentMoments(float(np.sum(1.0 / latent.variances)), c0, C_z)
    if rng is None:
        rng = np.random.default_rng(0)
    z = sample_latent(latent, n_mc, rng)
    sq = np.sum(latent.score(z) ** 2, axis=-1)
    return LatentMoments(float(sq.mean()), c0, C_z, float(sq.std(ddof=1) / np.sqrt(n_mc)))
