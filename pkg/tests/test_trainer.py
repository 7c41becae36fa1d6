import csv

import numpy as np
import pytest
from scipy import integrate

from subspace_diffusion.eval_metrics import subspace_error
from subspace_diffusion.exceptions import ConfigError, DivergenceError, DomainError
from subspace_diffusion.oracle_scores import oracle_score
from subspace_diffusion.score_network import MlpConfig, init_network
from subspace_diffusion.sde_core import TimeSchedule, alpha_h, noise_score_target
from subspace_diffusion.subspace_data import LatentDistribution, SubspaceModel, random_orthonormal, sample_data
from subspace_diffusion.trainer import (
    TrainConfig,
    draw_dsm_batch,
    dsm_loss,
    early_time_guard,
    explicit_loss,
    loss_equivalence_gap,
    qr_retract,
    regress_linear_score,
    sample_times,
    train,
    write_loss_trace,
)

SCHED = TimeSchedule(5.0, 0.1, 0.01)


def _gauss_model(D=16, variances=(4.0, 1.0), seed=0):
    A = random_orthonormal(D, len(variances), np.random.default_rng(seed))
    return SubspaceModel(A, LatentDistribution.gaussian(list(variances)))


def _net(model, v_init="oracle", v_mode="fixed", seed=1, width=32):
    return init_network(model.D, model.d, MlpConfig(3, width), v_init, np.random.default_rng(seed),
                        SCHED, model.A, v_mode)


def test_cheating_oracle_has_zero_dsm_loss(rng):
    model = _gauss_model()
    x0 = sample_data(model, 256, rng)
    batch = draw_dsm_batch(x0, SCHED, 2, rng)
    cheat = lambda x, t: noise_score_target(batch.x0, x, t)  # noqa: E731
    est = dsm_loss(cheat, x0, SCHED, 2, rng, batch=batch)
    assert est.value == 0.0 and est.se == 0.0


def _dsm_floor(model, schedule):
    # E|grad log phi - grad log p_t|^2 = sum_k [1/h - 1/(alpha^2 lam_k + h)], averaged over t
    lam = np.asarray(model.latent.variances)

    def f(t):
        a, h = alpha_h(t)
        return np.sum(1.0 / h - 1.0 / (a**2 * lam + h))

    val, _ = integrate.quad(f, schedule.t0, schedule.T)
    return val / (schedule.T - schedule.t0)


def test_true_score_attains_analytic_floor(rng):
    model = _gauss_model(D=6)
    x0 = sample_data(model, 20000, rng)
    true = lambda x, t: oracle_score(model, t, x).total  # noqa: E731
    est = dsm_loss(true, x0, SCHED, 1, rng)
    assert abs(est.value - _dsm_floor(model, SCHED)) <= 4 * est.se


def test_doubling_mc_halves_variance(rng):
    model = _gauss_model(D=4)
    net = _net(model, width=8)
    x0 = sample_data(model, 64, rng)
    v1 = np.var([dsm_loss(net, x0, SCHED, 4, rng).value for _ in range(300)], ddof=1)
    v2 = np.var([dsm_loss(net, x0, SCHED, 8, rng).value for _ in range(300)], ddof=1)
    assert 2 / 1.3 <= v1 / v2 <= 2 * 1.3


def test_loss_gap_same_network_is_zero(rng):
    model = _gauss_model(D=6)
    net = _net(model)
    gap = loss_equivalence_gap(net, net, model, SCHED, 200, 5, rng)
    assert gap.gap_dsm == 0.0 and gap.gap_explicit == 0.0


def test_loss_gap_random_pair_agrees(rng):
    model = _gauss_model(D=6)
    a = _net(model, v_init="random", seed=3)
    b = _net(model, v_init="random", seed=4)
    gap = loss_equivalence_gap(a, b, model, SCHED, 2000, 50, rng)
    assert abs(gap.gap_dsm - gap.gap_explicit) <= 5 * gap.se
    assert gap.se > 0


def test_loss_gap_rejects_large_latent(rng):
    model = _gauss_model(D=6, variances=(1.0, 1.0, 1.0))
    net = _net(model)
    with pytest.raises(DomainError):
        loss_equivalence_gap(net, net, model, SCHED, 10, 2, rng)


def test_sample_times_and_guard(rng):
    t = sample_times(SCHED, 10**6, rng)
    assert t.min() >= SCHED.t0 and t.max() <= SCHED.T
    se = (SCHED.T - SCHED.t0) / np.sqrt(12 * t.size)
    assert abs(t.mean() - (SCHED.t0 + SCHED.T) / 2) <= 4 * se
    g = early_time_guard(np.array([0.0, 0.05, 0.3]), SCHED)
    assert np.array_equal(g, [0.1, 0.1, 0.3])
    with pytest.raises(DomainError):
        early_time_guard(np.array([0.05]), SCHED, strict=True)


def test_schedule_rejects_t0_at_horizon():
    with pytest.raises(DomainError):
        TimeSchedule(5.0, 5.0, 0.01)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(n_steps=-1)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="lbfgs")


def test_qr_retract_fixes_orthonormal(rng):
    V = random_orthonormal(7, 3, rng)
    assert np.allclose(qr_retract(V), V, atol=1e-12)
    W = qr_retract(rng.standard_normal((7, 3)))
    assert np.allclose(W.T @ W, np.eye(3), atol=1e-12)


def test_zero_lr_leaves_parameters(rng):
    model = _gauss_model(D=6)
    net = _net(model, v_init="random", v_mode="learned")
    before = net.get_flat().copy()
    res = train(net, sample_data(model, 128, rng), TrainConfig(n_steps=20, batch_size=32, lr=0.0, v_lr=0.0))
    assert np.array_equal(res.net.get_flat(), before)
    assert np.all(np.isfinite(res.losses))


def test_training_is_deterministic(rng):
    model = _gauss_model(D=6)
    data = sample_data(model, 256, rng)
    cfg = TrainConfig(n_steps=50, batch_size=64, seed=9)
    r1 = train(_net(model, "random", "learned"), data, cfg)
    r2 = train(_net(model, "random", "learned"), data, cfg)
    assert np.array_equal(r1.losses, r2.losses)
    assert np.array_equal(r1.net.get_flat(), r2.net.get_flat())


def test_fixed_v_training_cuts_explicit_loss(rng):
    model = _gauss_model()
    data = sample_data(model, 4096, rng)
    net = _net(model)
    e0 = explicit_loss(net, model, SCHED, 4096, np.random.default_rng(5))
    at0 = [explicit_loss(net, model, SCHED, 4096, np.random.default_rng(6), t=t).value for t in (0.1, 0.5, 1.0)]
    res = train(net, data, TrainConfig(n_steps=5000, batch_size=256, seed=3))
    e1 = explicit_loss(res.net, model, SCHED, 4096, np.random.default_rng(5))
    assert e1.value <= 0.25 * e0.value
    at1 = [explicit_loss(res.net, model, SCHED, 4096, np.random.default_rng(6), t=t).value for t in (0.1, 0.5, 1.0)]
    assert all(b < a for a, b in zip(at0, at1))
    k = len(res.losses) // 10
    assert np.median(res.losses[-k:]) < np.median(res.losses[:k])


def test_learned_v_stays_orthonormal_and_recovers(rng):
    model = _gauss_model()
    data = sample_data(model, 2048, rng)
    net = _net(model, "identity_pad", "learned")
    err0 = subspace_error(net.V, model.A)
    gaps = []

    def cb(step, n, loss):
        gaps.append(np.max(np.abs(n.V.T @ n.V - np.eye(model.d))))

    res = train(net, data, TrainConfig(n_steps=1500, batch_size=256, seed=4), callbacks=[cb], log_every=1)
    assert len(gaps) == 1500 and max(gaps) <= 1e-8
    assert subspace_error(res.net.V, model.A) < err0


def test_divergence_is_reported(rng):
    model = _gauss_model(D=6)
    data = sample_data(model, 64, rng)
    data[0, 0] = np.nan
    with pytest.raises(DivergenceError) as exc:
        train(_net(model), data, TrainConfig(n_steps=5, batch_size=0))
    assert exc.value.step == 0


def test_train_rejects_wrong_dimension(rng):
    model = _gauss_model(D=6)
    with pytest.raises(DomainError):
        train(_net(model), rng.standard_normal((10, 5)), TrainConfig(n_steps=1))


def test_linear_regression_recovers_score(rng):
    model = _gauss_model(D=8)
    fit, oracle = regress_linear_score(model, SCHED, 0.5, 16384, rng)
    assert np.linalg.norm(fit - oracle, 2) <= 0.1


def test_write_loss_trace(tmp_path):
    p = tmp_path / "trace.csv"
    write_loss_trace(p, np.array([3.0, 2.0, 1.5, 1.0]), [{"step": 0, "explicit_loss": 0.5}], every=2)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["step", "dsm_loss", "explicit_loss"]
    assert rows[1] == ["0", "3", "0.5"] and rows[2] == ["2", "1.5", ""]
