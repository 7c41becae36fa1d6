"""Encoder-decoder score network with a skip connection.

``s(x, t) = V f(V^T x, t) / h(t) - x / h(t)`` where ``V`` (D x d) has
orthonormal columns and ``f: R^{d+1} -> R^d`` is a ReLU MLP fed ``[z, t]``.
Forward evaluation and backpropagation are written out by hand in numpy.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError
from .sde_core import TimeSchedule, alpha_h
from .subspace_data import random_orthonormal

__all__ = [
    "MlpConfig",
    "ScoreNetwork",
    "Gradients",
    "init_network",
    "eval_score",
    "backprop",
    "lipschitz_probe",
    "gradient_check",
    "GradCheck",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class MlpConfig:
    """Depth ``L`` (weight layers), hidden width ``M`` and optional clips.

    ``weight_clip`` bounds every weight and bias entry in magnitude and
    ``output_clip`` bounds ``|f(z, t)|_2``; zero disables either.
    """

    depth: int = 3
    width: int = 64
    weight_clip: float = 0.0
    output_clip: float = 0.0

    def __post_init__(self):
        if self.depth < 2 or self.width < 1:
            raise DomainError("need depth >= 2 and width >= 1")
        if self.weight_clip < 0 or self.output_clip < 0:
            raise DomainError("clip values must be nonnegative")


@dataclass
class Gradients:
    loss: float
    W: list
    b: list
    V: np.ndarray = None

    def flat(self):
        parts = [g.ravel() for pair in zip(self.W, self.b) for g in pair]
        if self.V is not None:
            parts.insert(0, self.V.ravel())
        return np.concatenate(parts)


@dataclass
class ScoreNetwork:
    V: np.ndarray
    W: list
    b: list
    config: MlpConfig
    schedule: TimeSchedule
    v_mode: str = "fixed"
    _cache: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.v_mode not in ("fixed", "learned"):
            raise DomainError(f"unknown v_mode {self.v_mode!r}")

    @property
    def D(self):
        return self.V.shape[0]

    @property
    def d(self):
        return self.V.shape[1]

    def copy(self):
        return ScoreNetwork(
            self.V.copy(), [w.copy() for w in self.W], [c.copy() for c in self.b],
            self.config, self.schedule, self.v_mode,
        )

    def _inputs(self, z, t):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))
        return np.concatenate([z, t[:, None]], axis=1)

    def _forward(self, u):
        acts = [u]
        a = u
        for W, c in zip(self.W[:-1], self.b[:-1]):
            a = np.maximum(a @ W + c, 0.0)
            acts.append(a)
        raw = a @ self.W[-1] + self.b[-1]
        out, scale = raw, None
        K = self.config.output_clip
        if K > 0:
            norm = np.linalg.norm(raw, axis=1, keepdims=True)
            scale = np.where(norm > K, K / np.maximum(norm, 1e-300), 1.0)
            out = raw * scale
        return out, (acts, raw, scale)

    def f(self, z, t):
        """The MLP ``f(z, t)`` on a batch of latent points, shape (n, d)."""
        z = np.asarray(z, dtype=float)
        out, _ = self._forward(self._inputs(z, t))
        return out[0] if z.ndim == 1 else out

    def __call__(self, x, t):
        return eval_score(self, x, t)

    def n_params(self):
        return self.V.size + sum(w.size + c.size for w, c in zip(self.W, self.b))

    def get_flat(self):
        parts = [self.V.ravel()]
        for w, c in zip(self.W, self.b):
            parts += [w.ravel(), c.ravel()]
        return np.concatenate(parts)

    def set_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params():
            raise DomainError(f"flat vector has {vec.size} entries, expected {self.n_params()}")
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = vec[pos:pos + size].reshape(shape).copy()
            pos += size
            return out

        self.V = take(self.V.shape)
        W, b = [], []
        for w, c in zip(self.W, self.b):
            W.append(take(w.shape))
            b.append(take(c.shape))
        self.W, self.b = W, b


def init_network(D, d, config=None, v_init="identity_pad", rng=None, schedule=None,
                 A=None, v_mode="fixed"):
    """Build a network with He-scaled Gaussian weights and zero biases.

    ``v_init`` is ``"identity_pad"`` (first ``d`` canonical vectors),
    ``"random"`` (Haar orthonormal) or ``"oracle"`` (``V = A``, which must
    then be supplied).
    """
    config = config or MlpConfig()
    schedule = schedule or TimeSchedule()
    rng = rng if rng is not None else np.random.default_rng()
    if v_init == "identity_pad":
        V = np.eye(D, d)
    elif v_init == "random":
        V = random_orthonormal(D, d, rng)
    elif v_init == "oracle":
        if A is None:
            raise DomainError("v_init='oracle' needs A")
        V = np.array(A, dtype=float)
    else:
        raise DomainError(f"unknown v_init {v_init!r}")
    sizes = [d + 1] + [config.width] * (config.depth - 1) + [d]
    W = [rng.standard_normal((m, n)) * np.sqrt(2.0 / m) for m, n in zip(sizes[:-1], sizes[1:])]
    b = [np.zeros(n) for n in sizes[1:]]
    return ScoreNetwork(V, W, b, config, schedule, v_mode)


def eval_score(net, x, t):
    """``V f(V^T x, t) / h(t) - x / h(t)`` for a batch ``x`` of shape (n, D)."""
    t = net.schedule.check_training_time(t)
    _, h = alpha_h(t)
    x = np.asarray(x, dtype=float)
    fz = net.f(x @ net.V, t)
    h = np.asarray(h)
    if h.ndim > 0:
        h = h[:, None]
    return (fz @ net.V.T - x) / h


def backprop(net, x, t, target):
    """Gradients of the mean squared residual ``mean_i |s(x_i, t_i) - target_i|^2``.

    Returns a :class:`Gradients` holding the loss and the gradients for each
    weight and bias. ``V`` receives its full Euclidean gradient (decoder and
    encoder paths) when ``net.v_mode == "learned"``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    t = np.broadcast_to(net.schedule.check_training_time(t), (n,))
    _, h = alpha_h(t)
    z = x @ net.V
    u = net._inputs(z, t)
    fz, (acts, raw, scale) = net._forward(u)
    resid = (fz @ net.V.T - x) / h[:, None] - target
    loss = float(np.sum(resid**2) / n)

    g_s = 2.0 * resid / (n * h[:, None])  # dL/ds scaled by 1/h
    g_f = g_s @ net.V
    if scale is not None:
        clipped = scale[:, 0] < 1.0
        if np.any(clipped):
            r = raw[clipped]
            rn = np.linalg.norm(r, axis=1, keepdims=True)
            rhat = r / rn
            gc = g_f[clipped]
            g_f = g_f.copy()
            g_f[clipped] = scale[clipped] * (gc - rhat * np.sum(rhat * gc, axis=1, keepdims=True))

    gW, gb = [None] * len(net.W), [None] * len(net.b)
    delta = g_f
    for layer in range(len(net.W) - 1, -1, -1):
        gW[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        delta = delta @ net.W[layer].T
        if layer > 0:
            delta = delta * (acts[layer] > 0)
    gV = None
    if net.v_mode == "learned":
        gV = g_s.T @ fz + x.T @ delta[:, : net.d]
    return Gradients(loss, gW, gb, gV)


def lipschitz_probe(f, t, n_pairs, rng, radius=3.0, t_range=None, fd_step=1e-5):
    """Empirical lower bounds on the Lipschitz constants of ``f`` in ``z`` and ``t``.

    ``f`` is a :class:`ScoreNetwork` (its MLP is probed) or any callable
    ``(z, t) -> (n, d)``. ``gamma_hat`` is the largest of random pair ratios
    ``|f(z1,t) - f(z2,t)| / |z1 - z2|`` over ``[-radius, radius]^d`` and of
    finite-difference Jacobian operator norms; ``gamma_t_hat`` is the same in
    ``t`` over ``t_range`` (defaults to the network's ``[t0, T]``).
    """
    if isinstance(f, ScoreNetwork):
        if t_range is None:
            t_range = (f.schedule.t0, f.schedule.T)
        func = f.f
        d = f.d
    else:
        func = f
        d = getattr(f, "d", None)
        if d is None:
            raise DomainError("callable probes need a `d` attribute")
    if t_range is None:
        t_range = (t, t)

    z1 = rng.uniform(-radius, radius, (n_pairs, d))
    z2 = rng.uniform(-radius, radius, (n_pairs, d))
    dz = np.linalg.norm(z1 - z2, axis=1)
    gamma = np.max(np.linalg.norm(func(z1, t) - func(z2, t), axis=1) / dz)

    n_jac = min(n_pairs, 500)
    zc = z1[:n_jac]
    jac = np.empty((n_jac, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = fd_step
        jac[:, :, k] = (func(zc + e, t) - func(zc - e, t)) / (2 * fd_step)
    gamma = max(gamma, np.linalg.norm(jac, ord=2, axis=(1, 2)).max())

    lo, hi = t_range
    if hi > lo:
        t1 = rng.uniform(lo, hi, n_pairs)
        t2 = rng.uniform(lo, hi, n_pairs)
        diff = np.linalg.norm(func(z1, t1) - func(z1, t2), axis=1) / np.abs(t1 - t2)
        gamma_t = diff.max()
        tc = np.clip(t1[:n_jac], lo + fd_step, hi - fd_step)
        dt = (func(zc, tc + fd_step) - func(zc, tc - fd_step)) / (2 * fd_step)
        gamma_t = max(gamma_t, np.linalg.norm(dt, axis=1).max())
    else:
        gamma_t = 0.0
    return float(gamma), float(gamma_t)


class GradCheck(NamedTuple):
    max_rel_error: float
    n_checked: int
    n_skipped: int


def _pattern(net, x, t):
    # on/off state of every ReLU and of the output clip
    _, (acts, raw, scale) = net._forward(net._inputs(np.atleast_2d(x) @ net.V, t))
    parts = [a > 0 for a in acts[1:]]
    if scale is not None:
        parts.append(scale < 1.0)
    return np.concatenate([p.ravel() for p in parts])


def gradient_check(net, x, t, target, step=1e-6):
    """Compare :func:`backprop` with central differences, coordinate by coordinate.

    Every parameter (and ``V`` when learned) is perturbed in turn. A stencil
    that switches some ReLU or the output clip straddles a kink where the
    loss is not differentiable, so that coordinate is skipped and counted.
    Entries whose gradient is tiny are compared against ``1e-6 max|g|``
    instead of their own magnitude.
    """
    g = backprop(net, x, t, target).flat()
    probe = net.copy()
    theta = net.get_flat()
    offset = 0 if net.v_mode == "learned" else net.V.size
    fd = np.full(g.size, np.nan)

    def at(i, delta):
        v = theta.copy()
        v[offset + i] += delta
        probe.set_flat(v)
        return backprop(probe, x, t, target).loss, _pattern(probe, x, t)

    for i in range(g.size):
        up, pat_up = at(i, step)
        down, pat_down = at(i, -step)
        if np.array_equal(pat_up, pat_down):
            fd[i] = (up - down) / (2 * step)
    ok = np.isfinite(fd)
    floor = 1e-6 * np.max(np.abs(g))
    rel = np.abs(g - fd)[ok] / np.maximum(np.maximum(np.abs(g[ok]), np.abs(fd[ok])), floor)
    return GradCheck(float(rel.max()) if rel.size else 0.0, int(ok.sum()), int((~ok).sum()))


# -- checkpoint format ---------------------------------------------------------
# A single UTF-8 JSON header line, then the flat parameter vector as
# little-endian float64 in the order V, W1, b1, W2, b2, ...


def save_checkpoint(net, path):
    header = {
        "format": "subspace-score-network/1",
        "D": net.D,
        "d": net.d,
        "v_mode": net.v_mode,
        "config": asdict(net.config),
        "schedule": net.schedule.to_dict(),
        "layers": [list(w.shape) for w in net.W],
    }
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(net.get_flat().astype("<f8").tobytes())
    return path


def load_checkpoint(path):
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    shapes = [tuple(s) for s in header["layers"]]
    net = ScoreNetwork(
        np.zeros((header["D"], header["d"])),
        [np.zeros(s) for s in shapes],
        [np.zeros(s[1]) for s in shapes],
        MlpConfig(**header["config"]),
        TimeSchedule(**header["schedule"]),
        header["v_mode"],
    )
    net.set_flat(blob)
    return net
