"""Denoising score matching for the encoder-decoder score network.

The empirical objective averages, over data points ``x_i``, times
``t ~ U[t0, T]`` and noisy states ``X_t ~ N(alpha(t) x_i, h(t) I)``, the
squared residual between the network and the conditional score
``-(X_t - alpha(t) x_i) / h(t)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigError, DivergenceError, DomainError
from .oracle_scores import oracle_score
from .sde_core import alpha_h, forward_kernel_sample, noise_score_target
from .score_network import backprop, eval_score

__all__ = [
    "TrainConfig",
    "TrainResult",
    "DsmBatch",
    "sample_times",
    "early_time_guard",
    "draw_dsm_batch",
    "dsm_loss",
    "explicit_loss",
    "loss_equivalence_gap",
    "train",
    "qr_retract",
    "regress_linear_score",
    "write_loss_trace",
]


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings.

    ``optimizer`` drives the MLP weights (``"adam"`` or ``"sgd_momentum"``).
    A learned ``V`` always takes heavy-ball steps along its projected
    gradient followed by a QR retraction, with step ``v_lr`` (defaults to
    ``lr``). ``batch_size = 0`` means full batch.
    """

    n_steps: int = 1000
    batch_size: int = 256
    times_per_sample: int = 1
    lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    v_lr: float = None
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 0 or self.batch_size < 0 or self.times_per_sample < 1:
            raise ConfigError("step, batch and sample counts must be nonnegative / positive")
        if self.lr < 0 or (self.v_lr is not None and self.v_lr < 0):
            raise ConfigError("learning rates must be nonnegative")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


class DsmBatch(NamedTuple):
    x0: np.ndarray
    t: np.ndarray
    xt: np.ndarray
    target: np.ndarray


class LossEstimate(NamedTuple):
    value: float
    se: float


def sample_times(schedule, n, rng):
    """Uniform training times on ``[t0, T]``."""
    return rng.uniform(schedule.t0, schedule.T, n)


def early_time_guard(t, schedule, strict=False):
    """Keep times out of ``[0, t0)`` where the score blows up.

    Times below ``t0`` are clamped to ``t0`` (or rejected when ``strict``).
    """
    t = np.asarray(t, dtype=float)
    if strict and np.any(t < schedule.t0):
        raise DomainError(f"time below early-stopping time t0={schedule.t0}")
    return np.clip(t, schedule.t0, schedule.T)


def draw_dsm_batch(x0, schedule, mc, rng):
    """Replicate each data row ``mc`` times and draw ``(t, X_t)`` for each copy."""
    x0 = np.repeat(np.atleast_2d(x0), mc, axis=0)
    t = sample_times(schedule, x0.shape[0], rng)
    xt = forward_kernel_sample(x0, t, rng)
    return DsmBatch(x0, t, xt, noise_score_target(x0, xt, t))


def _per_sample_sq(score, batch):
    return np.sum((score - batch.target) ** 2, axis=1)


def dsm_loss(net, data, schedule, mc, rng, batch=None):
    """Monte Carlo denoising score matching loss with its standard error.

    ``net`` is a :class:`ScoreNetwork` or any ``(x, t) -> ndarray`` score.
    Unbiased for ``(1/n) sum_i (T - t0)^{-1} int E|grad log phi_t - s|^2 dt``.
    A pre-drawn ``batch`` may be passed to reuse noise across calls.
    """
    if mc < 1:
        raise DomainError("need mc >= 1")
    batch = batch or draw_dsm_batch(data, schedule, mc, rng)
    sq = _per_sample_sq(net(batch.xt, batch.t), batch)
    return LossEstimate(float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0)


def explicit_loss(score, model, schedule, n, rng, batch=None, t=None):
    """Explicit score matching loss ``E|s(X_t, t) - grad log p_t(X_t)|^2``.

    ``score`` is a network or any ``(x, t) -> ndarray`` callable. Times are
    uniform on ``[t0, T]`` unless a fixed ``t`` is given.
    """
    if batch is None:
        from .subspace_data import sample_data

        x0 = sample_data(model, n, rng)
        tt = sample_times(schedule, n, rng) if t is None else np.full(n, float(t))
        xt = forward_kernel_sample(x0, tt, rng)
        batch = DsmBatch(x0, tt, xt, None)
    true = oracle_score(model, batch.t, batch.xt).total
    sq = np.sum((score(batch.xt, batch.t) - true) ** 2, axis=1)
    return LossEstimate(float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(sq.size)))


class LossGap(NamedTuple):
    gap_dsm: float
    gap_explicit: float
    se: float


def loss_equivalence_gap(net_a, net_b, model, schedule, n, mc, rng):
    """Loss differences between two networks under both objectives.

    Denoising and explicit losses differ by a constant that does not depend
    on the network, so ``gap_dsm`` and ``gap_explicit`` agree up to Monte
    Carlo error. Both are computed on the same draws; ``se`` is the
    standard error of their paired difference.
    """
    if model.d > 2:
        raise DomainError("explicit loss oracle is used for d <= 2")
    from .subspace_data import sample_data

    batch = draw_dsm_batch(sample_data(model, n, rng), schedule, mc, rng)
    true = oracle_score(model, batch.t, batch.xt).total
    sa = eval_score(net_a, batch.xt, batch.t)
    sb = eval_score(net_b, batch.xt, batch.t)
    dsm = _per_sample_sq(sa, batch) - _per_sample_sq(sb, batch)
    exp = np.sum((sa - true) ** 2, axis=1) - np.sum((sb - true) ** 2, axis=1)
    diff = dsm - exp
    # draws of one data point are correlated; aggregate per point for the se
    per_point = diff.reshape(n, mc).mean(axis=1)
    se = float(per_point.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return LossGap(float(dsm.mean()), float(exp.mean()), se)


def qr_retract(V):
    """Map ``V`` to the nearest-in-QR-sense matrix with orthonormal columns.

    Column signs are fixed so that an already orthonormal ``V`` is returned
    unchanged up to rounding.
    """
    Q, R = np.linalg.qr(V)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


@dataclass
class TrainResult:
    net: object
    losses: np.ndarray
    records: list = field(default_factory=list)


class _Adam:
    def __init__(self, shapes, cfg):
        self.cfg = cfg
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.k = 0

    def step(self, params, grads, lr):
        self.k += 1
        b1, b2 = self.cfg.momentum, self.cfg.beta2
        c1, c2 = 1 - b1**self.k, 1 - b2**self.k
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.cfg.adam_eps)


class _Momentum:
    def __init__(self, shapes, cfg):
        self.cfg = cfg
        self.buf = [np.zeros(s) for s in shapes]

    def step(self, params, grads, lr):
        for p, g, buf in zip(params, grads, self.buf):
            buf *= self.cfg.momentum
            buf += g
            p -= lr * buf


def train(net, data, config, schedule=None, callbacks: Sequence[Callable] = (), log_every=0):
    """Minimise the empirical denoising loss by minibatch optimisation.

    Parameters
    ----------
    net : ScoreNetwork
        Updated in place and returned.
    data : ndarray, shape (n, D)
    config : TrainConfig
    schedule : TimeSchedule, optional
        Defaults to the network's schedule.
    callbacks : sequence of callables
        Each is called as ``cb(step, net, loss)`` every ``log_every`` steps
        (and after the final step); a returned dict is appended to
        ``TrainResult.records``.

    Raises
    ------
    DivergenceError
        If the loss or any parameter becomes non-finite.
    """
    schedule = schedule or net.schedule
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != net.D:
        raise DomainError(f"data has dimension {data.shape[1]}, network expects {net.D}")
    rng = np.random.default_rng(config.seed)
    n = data.shape[0]
    batch_size = n if config.batch_size in (0, None) or config.batch_size >= n else config.batch_size
    shapes = [w.shape for w in net.W] + [c.shape for c in net.b]
    opt = (_Adam if config.optimizer == "adam" else _Momentum)(shapes, config)
    v_buf = np.zeros_like(net.V)
    v_lr = config.lr if config.v_lr is None else config.v_lr
    kappa = net.config.weight_clip
    losses = np.empty(config.n_steps)
    records = []
    for step in range(config.n_steps):
        idx = np.arange(n) if batch_size == n else rng.choice(n, batch_size, replace=False)
        batch = draw_dsm_batch(data[idx], schedule, config.times_per_sample, rng)
        grads = backprop(net, batch.xt, batch.t, batch.target)
        if not np.isfinite(grads.loss):
            raise DivergenceError("training loss is not finite", step)
        losses[step] = grads.loss
        opt.step(net.W + net.b, grads.W + grads.b, config.lr)
        if kappa > 0:
            for p in net.W + net.b:
                np.clip(p, -kappa, kappa, out=p)
        if net.v_mode == "learned" and v_lr > 0:
            G = grads.V
            sym = net.V.T @ G
            riem = G - net.V @ (0.5 * (sym + sym.T))
            v_buf = config.momentum * v_buf + riem
            net.V = qr_retract(net.V - v_lr * v_buf)
        if not (np.all(np.isfinite(net.V)) and all(np.all(np.isfinite(w)) for w in net.W)):
            raise DivergenceError("parameters became non-finite", step)
        last = step == config.n_steps - 1
        if callbacks and ((log_every and step % log_every == 0) or last):
            for cb in callbacks:
                rec = cb(step, net, grads.loss)
                if rec is not None:
                    records.append(rec)
    return TrainResult(net, losses, records)


def regress_linear_score(model, schedule, t, n, rng):
    """Least-squares fit of conditional-score targets on ``X_t`` at a fixed time.

    The population minimiser is the true score, which is linear for a
    diagonal Gaussian latent. Returns the fitted on-support block
    ``A^T M A`` and the oracle ``-Sigma_t^{-1}``.
    """
    from .subspace_data import sample_data

    if model.latent.kind != "gaussian_diag":
        raise DomainError("linear regression check needs a gaussian_diag latent")
    x0 = sample_data(model, n, rng)
    tt = np.full(n, float(t))
    xt = forward_kernel_sample(x0, tt, rng)
    y = noise_score_target(x0, xt, tt)
    coef, *_ = np.linalg.lstsq(xt, y, rcond=None)
    M = coef.T
    alpha, h = alpha_h(float(t))
    oracle = -np.diag(1.0 / (alpha**2 * model.latent.variances + h))
    return model.A.T @ M @ model.A, oracle


def write_loss_trace(path, losses, records=(), every=1):
    """Write ``step, dsm_loss[, explicit_loss, subspace_error]`` rows as CSV."""
    by_step = {r["step"]: r for r in records}
    extra = [k for k in ("explicit_loss", "subspace_error") if any(k in r for r in records)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "dsm_loss"] + extra)
        for step in range(0, len(losses), every):
            rec = by_step.get(step, {})
            w.writerow([step, f"{losses[step]:.17g}"] + [
                f"{rec[k]:.17g}" if k in rec else "" for k in extra
            ])
