"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the lines are collected
in the "acceptance criteria" section of the terminal summary. Criteria 9 and
10 run the full default sweeps and take a few minutes.
"""
import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal

from subspace_diffusion.constructive_approx import (
    build_approximant,
    compile_relu_1d,
    interior_probe_grid,
    measure_time_lipschitz,
    on_support_target,
    partition_of_unity_check,
    sup_error,
)
from subspace_diffusion.eval_metrics import ortho_lemma_check
from subspace_diffusion.harness import default_config, run_sweep_n, run_sweep_t0
from subspace_diffusion.oracle_scores import (
    gaussian_score,
    gaussian_tail_check,
    quadrature_score,
    score_moment_identity,
    score_second_moment,
)
from subspace_diffusion.sampler import (
    continuous_orthogonal_variance,
    orthogonal_empirical_check,
    orthogonal_growth,
    orthogonal_variance_recursion,
)
from subspace_diffusion.score_network import MlpConfig, gradient_check, init_network, lipschitz_probe
from subspace_diffusion.sde_core import TimeSchedule, alpha_h
from subspace_diffusion.subspace_data import LatentDistribution, SubspaceModel, random_orthonormal, sample_data
from subspace_diffusion.trainer import draw_dsm_batch, loss_equivalence_gap


def _gaussian_logpdf(model, t, x):
    a, h = alpha_h(t)
    A = model.A
    cov = a * a * (A * model.latent.variances) @ A.T + h * np.eye(model.D)
    return multivariate_normal(np.zeros(model.D), cov).logpdf(x)


def test_c01_oracle_equivalence(criterion):
    rep = criterion(1, "gaussian vs quadrature score, finite-difference gradient")
    worst_rel, worst_fd = 0.0, 0.0
    r = np.random.default_rng(101)
    step = 1e-5
    for D in (3, 16):
        for d in (1, 2):
            model = SubspaceModel(random_orthonormal(D, d, r), LatentDistribution.gaussian(r.uniform(0.3, 4.0, d)))
            for _ in range(100):
                t = r.uniform(0.05, 5.0)
                x = r.standard_normal(D) * 1.5
                a = gaussian_score(model, t, x).total
                b = quadrature_score(model, t, x).total
                worst_rel = max(worst_rel, np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
            for _ in range(10):
                t = r.uniform(0.05, 5.0)
                x = r.standard_normal(D) * 1.5
                fd = np.array([
                    (_gaussian_logpdf(model, t, x + step * e) - _gaussian_logpdf(model, t, x - step * e)) / (2 * step)
                    for e in np.eye(D)
                ])
                worst_fd = max(worst_fd, np.max(np.abs(fd - gaussian_score(model, t, x).total)))
    ok = worst_rel <= 1e-6 and worst_fd <= 1e-5
    rep.done(ok, f"max rel gap {worst_rel:.2e} (tol 1e-6), max fd gap {worst_fd:.2e} (tol 1e-5)", limit=30)


def test_c02_example_spot_value(criterion):
    rep = criterion(2, "spot value of the closed-form score")
    model = SubspaceModel(np.array([[1.0], [0.0]]), LatentDistribution.gaussian([4.0]))
    s = gaussian_score(model, np.log(2.0), np.array([1.0, 1.0])).total
    err = np.max(np.abs(s - [-0.4, -2.0]))
    rep.done(err <= 1e-12, f"score {np.round(s, 15).tolist()}, error {err:.1e}")


def test_c03_score_moment_identities(criterion):
    rep = criterion(3, "score moment identities")
    lats = {
        "gaussian": LatentDistribution.gaussian([4.0, 1.0]),
        "mixture": LatentDistribution.mixture([0.3, 0.7], [[1.5, 0.0], [-1.0, 1.0]], [0.5, 1.2]),
    }
    r = np.random.default_rng(303)
    ok, worst_z, worst_m = True, 0.0, -np.inf
    for lat in lats.values():
        for t in (0.1, 0.5, 2.0):
            mi = score_moment_identity(lat, t, 100_000, r)
            z = np.max(np.abs(mi.deviation) / mi.se)
            worst_z = max(worst_z, z)
            sm = score_second_moment(lat, t, 100_000, r)
            margin = (sm.estimate - sm.bound) / sm.se
            worst_m = max(worst_m, margin)
            ok &= z <= 4 and sm.estimate <= sm.bound + 4 * sm.se
    rep.done(ok, f"max |dev|/se {worst_z:.2f} (<= 4), max (E|s|^2 - bound)/se {worst_m:.1f} (<= 4)", limit=60)


def test_c04_orthogonal_process(criterion):
    rep = criterion(4, "orthogonal variance recursion and bounds")
    r = np.random.default_rng(404)
    ok, parts = True, []
    for t0 in (0.05, 0.1, 0.2, 0.4):
        s = TimeSchedule(5.0, t0, 0.01)
        chk = orthogonal_empirical_check(s, 100_000, r)
        z = abs(chk.empirical_var - chk.recursion_var) / chk.var_se
        vk = orthogonal_variance_recursion(s)[-1]
        cont = continuous_orthogonal_variance(s)
        # closed form of int psi^2 against quadrature
        tt = s.T - t0
        quad, _ = integrate.quad(lambda u: orthogonal_growth(s.T, u) ** 2, 0.0, tt, epsrel=1e-12)
        direct = (1 + quad) / orthogonal_growth(s.T, tt) ** 2
        good = z <= 4 and vk <= np.e * (t0 + s.eta) and cont <= np.expm1(t0) and abs(direct - cont) <= 1e-9 * cont
        ok &= good
        parts.append(f"t0={t0}: z={z:.2f} V={vk:.4f}<={np.e * (t0 + s.eta):.4f} cont={cont:.4f}<={np.expm1(t0):.4f}")
    rep.done(ok, "; ".join(parts), limit=60)


def test_c05_matrix_lemma(criterion):
    rep = criterion(5, "orthonormal pair inequalities")
    r = np.random.default_rng(505)
    ok, worst_trace, worst_ratio = True, 0.0, 0.0
    for _ in range(1000):
        D = int(r.integers(2, 12))
        d = int(r.integers(1, D))
        A = random_orthonormal(D, d, r)
        if r.random() < 0.5:
            V = random_orthonormal(D, d, r)
        else:
            V, _ = np.linalg.qr(A + 10 ** r.uniform(-6, 0) * r.standard_normal((D, d)))
        c = ortho_lemma_check(A, V)
        eps = c.eps
        tol = 1e-12 * max(1.0, eps)
        ok &= c.perp_v <= eps + tol and c.proj_gap <= 2 * eps + tol and c.gram_gap <= 2 * eps + tol
        ok &= c.align_gap <= 2 * eps + tol
        worst_trace = max(worst_trace, abs(c.perp_v - eps))
        if eps > 0:
            worst_ratio = max(worst_ratio, c.proj_gap / eps, c.gram_gap / eps, c.align_gap / eps)
    ok &= worst_trace <= 1e-10
    rep.done(ok, f"max gap/eps {worst_ratio:.3f} (<= 2), trace identity gap {worst_trace:.1e}", limit=10)


def test_c06_constructive_approximant(criterion):
    rep = criterion(6, "grid approximant budgets and ReLU compilation")
    sched = TimeSchedule(5.0, 0.1, 0.01)
    r = np.random.default_rng(606)
    ok, parts = True, []
    for variances, R, N1, N2 in (([4.0], 3.0, 32, 32), ([4.0, 1.0], 3.0, 16, 16)):
        lat = LatentDistribution.gaussian(variances)
        g = on_support_target(lat)
        tau = measure_time_lipschitz(g, R, sched.T, n_space=41 if lat.d == 1 else 15)
        ap = build_approximant(g, R, N1, N2, sched, beta=lat.beta, tau_hat=tau)
        pu = partition_of_unity_check(ap, 2000, r)
        zp, tp = interior_probe_grid(ap, 41 if lat.d == 1 else 21, 21, t_min=sched.t0)
        err = sup_error(ap, g, zp, tp)
        gam, _ = lipschitz_probe(ap, 0.5 * sched.T, 10_000, r, radius=R)
        good = pu <= 1e-12 and err <= ap.error_budget and gam <= ap.lipschitz_budget[0]
        part = f"d={lat.d}: pu {pu:.1e}, sup {err:.3f}<={ap.error_budget:.3f}, lip {gam:.2f}<={ap.lipschitz_budget[0]:.0f}"
        if lat.d == 1:
            net = compile_relu_1d(ap, 0.5 * sched.T)
            zz = np.linspace(-R, R, 10_000)[:, None]
            dev = np.max(np.abs(net.f(zz, 0.5 * sched.T) - ap(zz, 0.5 * sched.T)))
            good &= dev <= 1e-10
            part += f", relu {dev:.1e}"
        ok &= good
        parts.append(part)
    rep.done(ok, "; ".join(parts), limit=60)


def test_c07_loss_equivalence(criterion):
    rep = criterion(7, "denoising and explicit loss gaps agree")
    sched = TimeSchedule(5.0, 0.1, 0.01)
    r = np.random.default_rng(707)
    model = SubspaceModel(random_orthonormal(16, 2, r), LatentDistribution.gaussian([4.0, 1.0]))
    a = init_network(16, 2, MlpConfig(3, 32), "random", r, sched)
    b = init_network(16, 2, MlpConfig(3, 32), "random", r, sched)
    gap = loss_equivalence_gap(a, b, model, sched, 2000, 50, r)
    z = abs(gap.gap_dsm - gap.gap_explicit) / gap.se
    rep.done(z <= 5, f"dsm gap {gap.gap_dsm:.4f}, explicit gap {gap.gap_explicit:.4f}, |diff|/se {z:.2f} (<= 5)",
             limit=120)


def test_c08_gradient_correctness(criterion):
    rep = criterion(8, "backprop vs central differences")
    r = np.random.default_rng(808)
    worst, skipped, checked = 0.0, 0, 0
    for _ in range(10):
        D = int(r.integers(3, 9))
        d = int(r.integers(1, 3))
        sched = TimeSchedule(float(r.integers(2, 7)), 0.01 * int(r.integers(5, 50)), 0.01)
        cfg = MlpConfig(int(r.integers(2, 4)), int(r.integers(4, 12)))
        net = init_network(D, d, cfg, "random", r, sched, v_mode="learned" if r.random() < 0.7 else "fixed")
        model = SubspaceModel(random_orthonormal(D, d, r), LatentDistribution.gaussian(r.uniform(0.5, 3.0, d)))
        batch = draw_dsm_batch(sample_data(model, 6, r), sched, 1, r)
        gc = gradient_check(net, batch.xt, batch.t, batch.target, step=1e-6)
        worst = max(worst, gc.max_rel_error)
        skipped += gc.n_skipped
        checked += gc.n_checked
    ok = worst <= 1e-4 and skipped <= 0.1 * (checked + skipped)
    rep.done(ok, f"max rel error {worst:.2e} (<= 1e-4) over {checked} coordinates, {skipped} kink-straddling skipped",
             limit=60)


def test_c09_sample_size_trend(criterion, tmp_path):
    rep = criterion(9, "subspace error falls with n")
    res = run_sweep_n(default_config("sweep_n"), tmp_path)
    rows = [row for row in res.rows if not row["diverged"]]
    errs = [row["subspace_error"] for row in rows]
    steps = sum(b < a for a, b in zip(errs, errs[1:]))
    slope = np.polyfit(np.log([row["n"] for row in rows]), np.log(errs), 1)[0]
    ok = len(rows) == 5 and steps >= 3 and slope < 0
    rep.done(ok, f"errors {', '.join(f'{e:.2e}' for e in errs)}; {steps}/4 decreasing, slope {slope:.2f}", limit=1200)


def test_c10_early_stopping_tradeoff(criterion, tmp_path):
    rep = criterion(10, "early stopping tradeoff with the oracle score")
    cfg = default_config("sweep_t0")
    res = run_sweep_t0(cfg, tmp_path)
    w2 = [row["w2_bias"] for row in res.rows]
    mono = all(b < a for a, b in zip(w2, w2[1:]))
    ortho_ok = all(not row["diverged"] and row["ortho_second_moment"] <= 1.25 * np.e * (row["t0"] + cfg.schedule.eta)
                   for row in res.rows)
    ortho = ", ".join(f"{row['ortho_second_moment']:.3f}" for row in res.rows)
    rep.done(mono and ortho_ok, f"W2 {' > '.join(f'{v:.3f}' for v in w2)}; ortho moments {ortho}", limit=300)


def test_c11_gaussian_tail_lemma(criterion):
    rep = criterion(11, "gaussian tail integral bounds")
    fails = [(d, C, R) for d in (1, 2) for C in (0.5, 1.0, 2.0) for R in (2.0, 3.0, 4.0)
             if not gaussian_tail_check(d, C, R).holds]
    rep.done(not fails, f"18 cases, failures {fails}", limit=10)


if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
