import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subspace_diffusion.constructive_approx import (
    MAX_CENTERS,
    build_approximant,
    compile_relu_1d,
    interior_probe_grid,
    measure_time_lipschitz,
    on_support_target,
    partition_of_unity_check,
    sup_error,
    trapezoid,
    trapezoid_relu,
)
from subspace_diffusion.exceptions import DomainError, UnsupportedOracleError
from subspace_diffusion.score_network import MlpConfig, lipschitz_probe, load_checkpoint, save_checkpoint
from subspace_diffusion.sde_core import TimeSchedule, alpha_h
from subspace_diffusion.subspace_data import LatentDistribution

SCH = TimeSchedule(5.0, 0.1, 0.01)


def test_trapezoid_values():
    assert trapezoid(0.0) == 1.0
    assert trapezoid(1.5) == 0.5
    assert trapezoid(-3.0) == 0.0
    assert trapezoid(-1.0) == 1.0 and trapezoid(2.0) == 0.0


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_trapezoid_properties(a, b):
    assert 0.0 <= trapezoid(a) <= 1.0
    assert abs(trapezoid(a) - trapezoid(b)) <= abs(a - b) + 1e-15
    assert trapezoid_relu(a) == pytest.approx(trapezoid(a), abs=1e-12)


def const_target(c):
    def g(z, t):
        return np.full(np.atleast_2d(z).shape, c)

    g.d = 1
    return g


def test_constant_is_reproduced():
    ap = build_approximant(const_target(0.7), 2.0, 6, 5, SCH)
    z, t = interior_probe_grid(ap)
    assert np.max(np.abs(ap(z, t) - 0.7)) <= 1e-12


def test_linear_target_first_order_rate():
    def g(z, t):
        return 2.0 * np.atleast_2d(z) + 0.0 * np.asarray(t)[..., None]

    g.d = 1
    errs = []
    for N1 in (8, 16, 32):
        ap = build_approximant(g, 2.0, N1, 4, SCH)
        # the blend is exact on plateaus; measure on the whole cube interior
        z = np.linspace(-2.0, 2.0 - 4.0 / N1, 4001)[:, None]
        errs.append(np.max(np.abs(ap(z, 1.0) - g(z, 1.0))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 2.0) <= 0.05)


@pytest.mark.parametrize("variances", [[4.0], [0.5], [4.0, 1.0]])
def test_example_target_meets_budget(variances):
    lat = LatentDistribution.gaussian(variances)
    g = on_support_target(lat)
    R = 3.0
    tau = measure_time_lipschitz(g, R, SCH.T, n_space=41 if lat.d == 1 else 15)
    for N in (4, 8, 16):
        ap = build_approximant(g, R, N, N, SCH, beta=lat.beta, tau_hat=tau)
        z, t = interior_probe_grid(ap, n_space=41 if lat.d == 1 else 15, t_min=SCH.t0)
        assert sup_error(ap, g, z, t) <= ap.error_budget + 1e-9


def test_gaussian_target_closed_form():
    lat = LatentDistribution.gaussian([4.0, 1.0])
    g = on_support_target(lat)
    z = np.array([[1.0, -2.0], [0.5, 0.3]])
    for t in (0.0, 0.4, 3.0):
        a, h = alpha_h(t)
        shrink = a * a * lat.variances / (a * a * lat.variances + h)
        assert np.allclose(g(z, t), z * shrink, atol=1e-12)


def test_time_lipschitz_closed_form():
    # g = z lam / (lam + e^t - 1), |dg/dt| = |z| lam e^t / (lam + e^t - 1)^2; for lam >= 2
    # the peak sits at e^t = lam - 1 with value |z| lam / (4 (lam - 1))
    g = on_support_target(LatentDistribution.gaussian([4.0]))
    assert measure_time_lipschitz(g, 3.0, 5.0) == pytest.approx(3.0 * 4.0 / 12.0, rel=1e-4)
    # for lam <= 2 the peak is at t = 0 with value |z| / lam
    g = on_support_target(LatentDistribution.gaussian([0.5]))
    assert measure_time_lipschitz(g, 3.0, 5.0) == pytest.approx(3.0 / 0.5, rel=1e-4)


@pytest.mark.parametrize("d", [1, 2])
def test_partition_of_unity(d, rng):
    lat = LatentDistribution.gaussian([1.0] * d)
    ap = build_approximant(on_support_target(lat), 2.0, 4, 4, SCH)
    assert partition_of_unity_check(ap, 1000, rng) <= 1e-12


def test_cell_centers_hit_single_bump():
    ap = build_approximant(const_target(1.0), 2.0, 4, 4, SCH)
    m, j = 2, 1
    z = np.array([[2 * 2.0 * m / 4 - 2.0]])
    wz, wt = ap.axis_weights(z, np.array([SCH.T * j / 4]))
    assert wz[0, 0, m] == 1.0 and np.sum(wz[0, 0]) == 1.0
    assert wt[0, j] == 1.0 and np.sum(wt[0]) == 1.0


def test_zero_outside_cube(rng):
    lat = LatentDistribution.gaussian([4.0, 1.0])
    ap = build_approximant(on_support_target(lat), 2.0, 4, 4, SCH)
    z = rng.uniform(-5, 5, (500, 2))
    out = ap(z, 1.0)
    outside = np.any(np.abs(z) > 2.0, axis=1)
    assert np.all(out[outside] == 0.0)


def test_lipschitz_within_budget(rng):
    for variances in ([4.0], [0.5], [4.0, 1.0]):
        lat = LatentDistribution.gaussian(variances)
        for N in (4, 16):
            ap = build_approximant(on_support_target(lat), 3.0, N, N, SCH, beta=lat.beta)
            gamma, _ = lipschitz_probe(ap, 2.0, 10_000, rng, radius=3.0)
            assert gamma <= ap.lipschitz_budget[0] * (1 + 1e-6)


def test_memory_guard():
    def g(z, t):
        return np.atleast_2d(z)

    g.d = 3
    with pytest.raises(DomainError):
        build_approximant(g, 1.0, 300, 1000, SCH)
    assert 300**3 * 1000 > MAX_CENTERS
    with pytest.raises(DomainError):
        build_approximant(g, -1.0, 2, 2, SCH)


def test_relu_single_cell_is_trapezoid():
    ap = build_approximant(const_target(1.0), 1.0, 1, 1, SCH)
    net = compile_relu_1d(ap, 1.0)
    assert net.config.width == 4
    z = np.linspace(-1.0, 1.0, 2001)[:, None]
    y = (z[:, 0] + 1.0) / 2.0
    assert np.allclose(net.f(z, 1.0)[:, 0], trapezoid(3 * y), atol=1e-14)


def test_relu_zero_target():
    net = compile_relu_1d(build_approximant(const_target(0.0), 1.0, 5, 3, SCH), 2.0)
    assert np.all(net.W[-1] == 0.0)


def test_relu_random_target_and_export(tmp_path, rng):
    vals = rng.standard_normal((8, 5))

    def g(z, t):
        z = np.atleast_2d(z)
        t = np.broadcast_to(t, (z.shape[0],))
        m = np.round((z[:, 0] + 2.0) / 4.0 * 8).astype(int) % 8
        j = np.round(t / SCH.T * 5).astype(int) % 5
        return vals[m, j][:, None]

    g.d = 1
    ap = build_approximant(g, 2.0, 8, 5, SCH)
    for t in (0.3, 2.2):
        net = compile_relu_1d(ap, t)
        z = np.linspace(-2.0, 2.0, 10_000)[:, None]
        assert np.max(np.abs(net.f(z, t) - ap(z, t))) <= 1e-10
        # the time input has zero weight
        assert np.all(net.W[0][1] == 0.0)
    back = load_checkpoint(save_checkpoint(net, tmp_path / "relu.ckpt"))
    assert back.config == MlpConfig(2, 32)
    assert np.array_equal(back.f(z, 2.2), net.f(z, 2.2))


def test_relu_compilation_needs_d1():
    lat = LatentDistribution.gaussian([1.0, 1.0])
    with pytest.raises(UnsupportedOracleError):
        compile_relu_1d(build_approximant(on_support_target(lat), 1.0, 2, 2, SCH), 1.0)
