"""Config-driven experiments: validation battery and the three sweeps.

Every run writes into its output directory

* ``resolved_config.json``: the full configuration after defaults,
* ``results.csv``: one row per check or sweep point,
* ``summary.json``: checks with pass/fail and fitted rates,
* ``plot.svg`` (sweeps only) and ``manifest.json`` with file hashes and
  library versions.

Per-point randomness comes from ``SeedSequence(seed).spawn``, so results do
not depend on whether points run sequentially or on a process pool.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .constructive_approx import (
    build_approximant,
    compile_relu_1d,
    interior_probe_grid,
    measure_time_lipschitz,
    on_support_target,
    partition_of_unity_check,
    sup_error,
)
from .eval_metrics import (
    W2_ASSIGNMENT_CAP,
    gaussian_w2,
    ortho_lemma_check,
    procrustes_align,
    rate_fit,
    subspace_error,
    tv_latent_histogram,
    w2_latent,
)
from .exceptions import ConfigError, DivergenceError, DomainError, InvariantError
from .oracle_scores import (
    conditional_cov_check,
    gaussian_score,
    gaussian_tail_check,
    oracle_score,
    oracle_score_field,
    quadrature_log_density,
    quadrature_score,
    score_moment_identity,
    score_second_moment,
)
from .sampler import (
    backward_sample,
    continuous_orthogonal_variance,
    orthogonal_empirical_check,
    orthogonal_variance_recursion,
)
from .score_network import MlpConfig, gradient_check, init_network, lipschitz_probe
from .sde_core import TimeSchedule, alpha_h, forward_kernel_sample, noise_score_target
from .subspace_data import LatentDistribution, SubspaceModel, random_orthonormal, sample_data, sample_latent
from .svgplot import line_chart
from .trainer import TrainConfig, explicit_loss, train

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "default_config",
    "run_experiment",
    "run_validate",
    "run_sweep_n",
    "run_sweep_t0",
    "run_sweep_grid",
    "RunResult",
    "EXPERIMENTS",
]

EXPERIMENTS = ("validate", "sweep_n", "sweep_t0", "sweep_grid")


# -- configuration ---------------------------------------------------------------


@dataclass
class ModelSection:
    D: int = 16
    d: int = 2
    latent: dict = field(default_factory=lambda: {"kind": "gaussian_diag", "variances": [4.0, 1.0]})
    A: list = None  # explicit basis; drawn at random from the seed when omitted


@dataclass
class ScheduleSection:
    T: float = 5.0
    t0: float = 0.1
    eta: float = 0.01


@dataclass
class NetworkSection:
    depth: int = 3
    width: int = 32
    weight_clip: float = 0.0
    output_clip: float = 0.0
    v_init: str = "identity_pad"
    v_mode: str = "learned"


@dataclass
class TrainSection:
    n_steps: int = 5000
    batch_size: int = 0
    times_per_sample: int = 1
    lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    v_lr: float = 1e-3


@dataclass
class GridSection:
    R: float = 3.0
    probe_space: int = 41
    probe_time: int = 21
    lipschitz_pairs: int = 10000


@dataclass
class ExperimentConfig:
    experiment: str = "validate"
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    grid: GridSection = field(default_factory=GridSection)
    sweep: list = field(default_factory=list)
    score: str = "oracle"
    n_eval: int = 4096
    n_samples: int = 4096
    n_train: int = 4096
    tv_bins: int = 64

    def to_dict(self):
        return asdict(self)

    # derived objects
    def time_schedule(self, t0=None):
        s = self.schedule
        return TimeSchedule(s.T, s.t0 if t0 is None else t0, s.eta)

    def latent(self):
        return LatentDistribution.from_dict(self.model.latent)

    def mlp(self):
        n = self.network
        return MlpConfig(n.depth, n.width, n.weight_clip, n.output_clip)

    def train_config(self, seed):
        return TrainConfig(seed=int(seed), **asdict(self.train))


_SECTIONS = {
    "model": ModelSection,
    "schedule": ScheduleSection,
    "network": NetworkSection,
    "train": TrainSection,
    "grid": GridSection,
}

_DEFAULTS = {
    "validate": {"model": {"D": 3, "d": 2, "latent": {"kind": "gaussian_diag", "variances": [4.0, 1.0]}}},
    "sweep_n": {"sweep": [512, 1024, 2048, 4096, 8192], "seed": 2},
    "sweep_t0": {"sweep": [0.4, 0.2, 0.1, 0.05], "n_eval": 2048},
    "sweep_grid": {
        "model": {"D": 4, "d": 1, "latent": {"kind": "gaussian_diag", "variances": [4.0]}},
        "sweep": [[4, 4], [8, 8], [16, 16], [32, 32]],
    },
}


def _merge(base, over, where):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}{k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict) and k != "latent":
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def default_config(experiment):
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    raw = _merge(ExperimentConfig().to_dict(), _DEFAULTS[experiment], "")
    raw["experiment"] = experiment
    return parse_config(raw)


def parse_config(raw, experiment=None):
    """Validate a config dict; missing keys take the experiment defaults.

    Raises
    ------
    ConfigError
        On unknown keys, wrong types or values a sweep cannot use.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("experiment", experiment)
    if experiment is not None and name != experiment:
        raise ConfigError(f"config is for {name!r}, command is {experiment!r}")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    base = _merge(ExperimentConfig().to_dict(), _DEFAULTS[name], "")
    merged = _merge(base, raw, "")
    merged["experiment"] = name
    kw = {}
    for f in fields(ExperimentConfig):
        v = merged[f.name]
        kw[f.name] = _SECTIONS[f.name](**v) if f.name in _SECTIONS else v
    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    m = cfg.model
    if not (isinstance(m.D, int) and isinstance(m.d, int) and 1 <= m.d < m.D):
        raise ConfigError("model needs integers 1 <= d < D")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    try:
        latent = cfg.latent()
        cfg.time_schedule()
        cfg.mlp()
        cfg.train_config(0)
    except (DomainError, InvariantError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if latent.d != m.d:
        raise ConfigError(f"latent has dimension {latent.d}, model.d is {m.d}")
    if m.A is not None and np.shape(m.A) != (m.D, m.d):
        raise ConfigError(f"model.A must have shape ({m.D}, {m.d})")
    if cfg.score not in ("oracle", "network"):
        raise ConfigError("score must be 'oracle' or 'network'")
    if cfg.network.v_init not in ("identity_pad", "random", "oracle"):
        raise ConfigError(f"unknown network.v_init {cfg.network.v_init!r}")
    if cfg.network.v_mode not in ("fixed", "learned"):
        raise ConfigError(f"unknown network.v_mode {cfg.network.v_mode!r}")
    if not isinstance(cfg.tv_bins, int) or cfg.tv_bins < 1:
        raise ConfigError("tv_bins must be a positive integer")
    if min(cfg.n_eval, cfg.n_samples, cfg.n_train) < 2:
        raise ConfigError("sample counts must be at least 2")
    s = cfg.sweep
    if cfg.experiment == "sweep_n":
        if len(s) < 4 or not all(isinstance(v, int) and v > 1 for v in s):
            raise ConfigError("sweep_n needs at least 4 integer sample sizes")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ConfigError("sweep_n values must be strictly ascending")
        if m.d > 2:
            raise ConfigError("sweep_n evaluates the explicit loss and needs d <= 2")
    elif cfg.experiment == "sweep_t0":
        if len(s) < 2 or any(b >= a for a, b in zip(s, s[1:])):
            raise ConfigError("sweep_t0 needs at least 2 strictly descending t0 values")
        for t0 in s:
            try:
                cfg.time_schedule(t0)
            except DomainError as exc:
                raise ConfigError(f"t0={t0}: {exc}") from exc
        if m.d > 2:
            raise ConfigError("latent W2 and TV need d <= 2")
    elif cfg.experiment == "sweep_grid":
        if not s or not all(
            isinstance(p, (list, tuple)) and len(p) == 2 and all(isinstance(v, int) and v >= 1 for v in p)
            for p in s
        ):
            raise ConfigError("sweep_grid needs a list of [N1, N2] integer pairs")
        if cfg.grid.R <= 0:
            raise ConfigError("grid.R must be positive")
        if latent.kind != "gaussian_diag":
            raise ConfigError("sweep_grid targets the gaussian_diag latent")


# -- output ----------------------------------------------------------------------


@dataclass
class RunResult:
    passed: bool
    checks: list
    rows: list
    out: Path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _check(name, passed, value=None, bound=None, detail=""):
    return {"check": name, "passed": bool(passed), "value": value, "bound": bound, "detail": detail}


def _write_outputs(out, cfg, columns, rows, checks, extra=None, plot=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "resolved_config.json"
    p.write_text(json.dumps(_jsonable(cfg.to_dict()), indent=2, sort_keys=True) + "\n")
    written.append(p)

    p = out / "results.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    written.append(p)

    summary = {"experiment": cfg.experiment, "passed": all(c["passed"] for c in checks), "checks": checks}
    summary.update(extra or {})
    p = out / "summary.json"
    p.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    written.append(p)

    if plot is not None:
        p = out / "plot.svg"
        line_chart(p, **plot)
        written.append(p)

    manifest = {
        "package": "subspace_diffusion",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "files": {q.name: hashlib.sha256(q.read_bytes()).hexdigest() for q in written},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return summary["passed"]


def _build_model(cfg, ss):
    if cfg.model.A is not None:
        A = np.asarray(cfg.model.A, dtype=float)
    else:
        A = random_orthonormal(cfg.model.D, cfg.model.d, np.random.default_rng(ss))
    return SubspaceModel(A, cfg.latent())


def _child(ss, k):
    # stateless counterpart of SeedSequence.spawn, safe to call repeatedly
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,))


def _map(fn, tasks, parallel):
    if parallel and parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# -- validate ----------------------------------------------------------------------


def _validate_checks(cfg, ss_list):
    checks = []
    rng = lambda k: np.random.default_rng(ss_list[k])  # noqa: E731
    try:
        model = _build_model(cfg, ss_list[0])
        checks.append(_check("model.orthonormal_columns", True, 0.0, 1e-10))
    except InvariantError as exc:
        checks.append(_check(exc.invariant, False, detail=str(exc)))
        model = None
    sch = cfg.time_schedule()
    latent = cfg.latent()

    if model is not None and model.d <= 2 and latent.kind == "gaussian_diag":
        r = rng(1)
        worst = 0.0
        for _ in range(20):
            t = float(r.uniform(sch.t0, sch.T))
            x = r.standard_normal((1, model.D)) * 2
            a = gaussian_score(model, t, x).total
            b = quadrature_score(model, t, x).total
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-12))))
        checks.append(_check("oracle.closed_form_vs_quadrature", worst <= 1e-6, worst, 1e-6))

        worst = 0.0
        step = 1e-5
        for _ in range(5):
            t = float(r.uniform(sch.t0, sch.T))
            x = r.standard_normal(model.D)
            s = oracle_score(model, t, x[None]).total[0]
            fd = np.empty(model.D)
            for i in range(model.D):
                e = np.zeros(model.D)
                e[i] = step
                fd[i] = (quadrature_log_density(model, t, x + e) - quadrature_log_density(model, t, x - e)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(fd - s))))
        checks.append(_check("oracle.score_vs_log_density_gradient", worst <= 1e-5, worst, 1e-5))

    ex = SubspaceModel(np.array([[1.0], [0.0]]), LatentDistribution.gaussian([4.0]))
    spot = gaussian_score(ex, np.log(2.0), np.array([[1.0, 1.0]])).total[0]
    dev = float(np.max(np.abs(spot - np.array([-0.4, -2.0]))))
    checks.append(_check("oracle.example_spot_value", dev <= 1e-12, dev, 1e-12))

    target = model if model is not None else latent
    mi = score_moment_identity(target, 0.5, 100_000, rng(2))
    z = float(np.max(np.abs(mi.deviation) / mi.se))
    checks.append(_check("oracle.score_moment_identity", z <= 4.0, z, 4.0, "max |dev|/se"))
    sm = score_second_moment(target, 0.5, 100_000, rng(3))
    checks.append(_check("oracle.score_second_moment", sm.estimate <= sm.bound + 4 * sm.se, sm.estimate, sm.bound))
    if latent.kind == "gaussian_diag":
        op, bound = conditional_cov_check(latent, 0.5)
        checks.append(_check("oracle.conditional_covariance", op <= bound, op, bound))

    oc = orthogonal_empirical_check(sch, 100_000, rng(4))
    z = abs(oc.empirical_var - oc.recursion_var) / oc.var_se
    checks.append(_check("sampler.variance_recursion", z <= 4.0, z, 4.0, "|emp - rec| / se"))
    vk = orthogonal_variance_recursion(sch)[-1]
    bound = np.e * (sch.t0 + sch.eta)
    checks.append(_check("sampler.discrete_orthogonal_bound", vk <= bound, vk, bound))
    vc = continuous_orthogonal_variance(sch)
    checks.append(_check("sampler.continuous_orthogonal_bound", vc <= np.expm1(sch.t0), vc, float(np.expm1(sch.t0))))

    r = rng(5)
    ok = True
    for _ in range(200):
        D = int(r.integers(2, 17))
        d = int(r.integers(1, min(D - 1, 4) + 1))
        A = random_orthonormal(D, d, r)
        V = np.linalg.qr(A + r.uniform(0, 1) * r.standard_normal((D, d)))[0]
        ok &= ortho_lemma_check(A, V).holds
    checks.append(_check("eval.alignment_lemma", ok, detail="200 random pairs"))

    g1 = on_support_target(LatentDistribution.gaussian([4.0]))
    tau = measure_time_lipschitz(g1, 3.0, sch.T)
    ap = build_approximant(g1, 3.0, 8, 8, sch, beta=1.0, tau_hat=tau)
    pu = partition_of_unity_check(ap, 1000, rng(6))
    checks.append(_check("approx.partition_of_unity", pu <= 1e-12, pu, 1e-12))
    zp, tp = interior_probe_grid(ap, t_min=sch.t0)
    err = sup_error(ap, g1, zp, tp)
    checks.append(_check("approx.sup_error_budget", err <= ap.error_budget + 1e-9, err, ap.error_budget))
    net = compile_relu_1d(ap, 1.0)
    zz = np.linspace(-3.0, 3.0, 10_000)[:, None]
    dev = float(np.max(np.abs(net.f(zz, 1.0) - ap(zz, 1.0))))
    checks.append(_check("approx.relu_compilation", dev <= 1e-10, dev, 1e-10))

    ok = True
    for d in (1, 2):
        for C in (0.5, 1.0, 2.0):
            for R in (2.0, 3.0, 4.0):
                ok &= gaussian_tail_check(d, C, R).holds
    checks.append(_check("oracle.gaussian_tail_lemma", ok, detail="d in {1,2}, C in {0.5,1,2}, R in {2,3,4}"))

    r = rng(7)
    worst, skipped = 0.0, 0
    for v_mode in ("fixed", "learned"):
        net = init_network(5, 2, MlpConfig(3, 8), v_init="random", rng=r, schedule=sch, v_mode=v_mode)
        x0 = r.standard_normal((16, 5))
        t = r.uniform(sch.t0, sch.T, 16)
        xt = forward_kernel_sample(x0, t, r)
        gc = gradient_check(net, xt, t, noise_score_target(x0, xt, t), step=1e-5)
        worst, skipped = max(worst, gc.max_rel_error), skipped + gc.n_skipped
    checks.append(_check("network.backprop_vs_finite_differences", worst <= 1e-4, worst, 1e-4,
                         f"{skipped} kink-straddling coordinates skipped"))
    return checks


def run_validate(cfg, out, parallel=0):
    ss = np.random.SeedSequence(cfg.seed).spawn(8)
    checks = _validate_checks(cfg, ss)
    cols = ["check", "passed", "value", "bound", "detail"]
    passed = _write_outputs(out, cfg, cols, checks, checks)
    return RunResult(passed, checks, checks, Path(out))


# -- sweep over sample size ------------------------------------------------------------


def _sweep_n_point(task):
    cfg, model, n, ss_point, init_ss, eval_ss = task
    sch = cfg.time_schedule()
    data_ss, train_ss = _child(ss_point, 0), _child(ss_point, 1)
    data = sample_data(model, n, np.random.default_rng(data_ss))
    # shared initialisation isolates the effect of n
    net = init_network(
        model.D, model.d, cfg.mlp(), cfg.network.v_init, np.random.default_rng(init_ss),
        sch, model.A, cfg.network.v_mode,
    )
    row = {"n": n}
    try:
        res = train(net, data, cfg.train_config(train_ss.generate_state(1)[0]), sch)
    except DivergenceError as exc:
        row.update(diverged=True, detail=str(exc))
        return row
    eval_rng = np.random.default_rng(eval_ss)
    ex = explicit_loss(res.net, model, sch, cfg.n_eval, eval_rng)
    tail = res.losses[-min(100, len(res.losses)):] if len(res.losses) else np.array([np.nan])
    row.update(
        subspace_error=subspace_error(res.net.V, model.A),
        explicit_loss=ex.value,
        explicit_loss_se=ex.se,
        final_dsm_loss=float(np.mean(tail)),
        diverged=False,
    )
    return row


def _decreasing_steps(ys):
    return int(sum(b < a for a, b in zip(ys, ys[1:])))


def run_sweep_n(cfg, out, parallel=0):
    root = np.random.SeedSequence(cfg.seed)
    model_ss, init_ss, eval_ss, *point_ss = root.spawn(3 + len(cfg.sweep))
    model = _build_model(cfg, model_ss)
    tasks = [(cfg, model, n, s, init_ss, eval_ss) for n, s in zip(cfg.sweep, point_ss)]
    rows = _map(_sweep_n_point, tasks, parallel)
    good = [r for r in rows if not r["diverged"]]
    checks = []
    extra = {}
    if len(good) >= 3:
        ns = [r["n"] for r in good]
        se = [r["subspace_error"] for r in good]
        sc = [r["explicit_loss"] for r in good]
        fit_s = rate_fit(ns, np.maximum(se, 1e-300))
        fit_e = rate_fit(ns, sc)
        steps = _decreasing_steps(se)
        need = len(cfg.sweep) - 2
        checks.append(_check("sweep_n.subspace_error_decreasing_steps", steps >= need, steps, need))
        checks.append(_check("sweep_n.subspace_error_slope_negative", fit_s.slope < 0, fit_s.slope, 0.0))
        checks.append(_check("sweep_n.explicit_loss_slope_negative", fit_e.slope < 0, fit_e.slope, 0.0))
        extra["fits"] = {"subspace_error": fit_s._asdict(), "explicit_loss": fit_e._asdict()}
    else:
        checks.append(_check("sweep_n.enough_points", False, len(good), 3))
    for r in rows:
        if r["diverged"]:
            checks.append(_check(f"sweep_n.diverged_n{r['n']}", False, detail=r.get("detail", "")))
    cols = ["n", "subspace_error", "explicit_loss", "explicit_loss_se", "final_dsm_loss", "diverged"]
    plot = dict(
        xs=[r["n"] for r in rows],
        series={
            "subspace error": [r.get("subspace_error", np.nan) for r in rows],
            "explicit score loss": [r.get("explicit_loss", np.nan) for r in rows],
        },
        xlabel="n", ylabel="error", title="error vs sample size",
    )
    passed = _write_outputs(out, cfg, cols, rows, checks, extra, plot)
    return RunResult(passed, checks, rows, Path(out))


# -- sweep over early-stopping time ------------------------------------------------------


def _sweep_t0_point(task):
    cfg, model, t0, ss_point, ss_common, net = task
    sch = cfg.time_schedule(t0)
    latent = model.latent
    n_w2 = cfg.n_eval if latent.d == 1 else min(cfg.n_eval, W2_ASSIGNMENT_CAP)
    # common random numbers: the same (z, xi) at every t0
    crn = np.random.default_rng(ss_common)
    z0 = sample_latent(latent, n_w2, crn)
    xi = crn.standard_normal(z0.shape)
    alpha, h = alpha_h(t0)
    zt = alpha * z0 + np.sqrt(h) * xi
    row = {"t0": t0, "w2_bias": w2_latent(zt, z0)}
    if latent.kind == "gaussian_diag":
        lam = latent.variances
        row["w2_bias_analytic"] = gaussian_w2(0, np.diag(alpha**2 * lam + h), 0, np.diag(lam))
    score = oracle_score_field(model) if net is None else net
    try:
        run = backward_sample(score, sch, cfg.n_samples, np.random.default_rng(ss_point),
                              dim=model.D, basis=model.A if net is None else net.V)
    except DivergenceError as exc:
        row.update(diverged=True, detail=str(exc))
        return row
    if net is None:
        gen = run.samples @ model.A
    else:
        gen = run.samples @ net.V @ procrustes_align(net.V, model.A)
    m = min(n_w2, gen.shape[0])
    # TV reference draws at the generated sample size; the floor compares two
    # independent draws of the same law and shows the estimator's bias
    ref = np.random.default_rng(_child(ss_common, 1))
    ld_a = alpha * sample_latent(latent, gen.shape[0], ref) + np.sqrt(h) * ref.standard_normal(gen.shape)
    ld_b = alpha * sample_latent(latent, gen.shape[0], ref) + np.sqrt(h) * ref.standard_normal(gen.shape)
    row.update(
        w2_generated=w2_latent(gen[:m], z0[:m]),
        tv_generated=tv_latent_histogram(gen, ld_a, bins=cfg.tv_bins),
        tv_floor=tv_latent_histogram(ld_b, ld_a, bins=cfg.tv_bins),
        ortho_second_moment=run.ortho_second_moment,
        ortho_recursion=float(orthogonal_variance_recursion(sch)[-1]),
        ortho_bound=float(np.e * (t0 + sch.eta)),
        diverged=False,
    )
    return row


def run_sweep_t0(cfg, out, parallel=0):
    root = np.random.SeedSequence(cfg.seed)
    model_ss, common_ss, train_ss, *point_ss = root.spawn(3 + len(cfg.sweep))
    model = _build_model(cfg, model_ss)
    nets = [None] * len(cfg.sweep)
    if cfg.score == "network":
        data_ss, init_ss, opt_ss = (_child(train_ss, k) for k in range(3))
        data = sample_data(model, cfg.n_train, np.random.default_rng(data_ss))
        nets = []
        for t0 in cfg.sweep:
            sch = cfg.time_schedule(t0)
            net = init_network(model.D, model.d, cfg.mlp(), cfg.network.v_init,
                               np.random.default_rng(init_ss), sch, model.A, cfg.network.v_mode)
            nets.append(train(net, data, cfg.train_config(opt_ss.generate_state(1)[0]), sch).net)
    tasks = [(cfg, model, t0, s, common_ss, net) for t0, s, net in zip(cfg.sweep, point_ss, nets)]
    rows = _map(_sweep_t0_point, tasks, parallel)
    w2 = [r["w2_bias"] for r in rows]
    mono = all(b < a for a, b in zip(w2, w2[1:]))
    checks = [_check("sweep_t0.w2_bias_decreasing", mono, detail=" > ".join(f"{v:.4g}" for v in w2))]
    for r in rows:
        if r.get("diverged"):
            checks.append(_check(f"sweep_t0.diverged_t0_{r['t0']}", False, detail=r.get("detail", "")))
            continue
        lim = 1.25 * r["ortho_bound"]
        checks.append(_check(f"sweep_t0.ortho_moment_t0_{r['t0']}", r["ortho_second_moment"] <= lim,
                             r["ortho_second_moment"], lim))
    cols = ["t0", "w2_bias", "w2_bias_analytic", "w2_generated", "tv_generated", "tv_floor",
            "ortho_second_moment", "ortho_recursion", "ortho_bound", "diverged"]
    plot = dict(
        xs=cfg.sweep,
        series={
            "W2 bias": w2,
            "W2 generated": [r.get("w2_generated", np.nan) for r in rows],
            "orthogonal moment": [r.get("ortho_second_moment", np.nan) for r in rows],
        },
        xlabel="t0", ylabel="value", title="early stopping tradeoff",
    )
    passed = _write_outputs(out, cfg, cols, rows, checks, None, plot)
    return RunResult(passed, checks, rows, Path(out))


# -- sweep over approximation grid --------------------------------------------------------


def _sweep_grid_point(task):
    cfg, N1, N2, tau, ss_point = task
    sch = cfg.time_schedule()
    latent = cfg.latent()
    target = on_support_target(latent)
    R = cfg.grid.R
    rng = np.random.default_rng(ss_point)
    ap = build_approximant(target, R, N1, N2, sch, beta=latent.beta, tau_hat=tau)
    row = {"N1": N1, "N2": N2, "tau_hat": tau, "error_budget": ap.error_budget}
    try:
        zp, tp = interior_probe_grid(ap, cfg.grid.probe_space, cfg.grid.probe_time, t_min=sch.t0)
        row["sup_error"] = sup_error(ap, target, zp, tp)
        row["pu_deviation"] = partition_of_unity_check(ap, 1000, rng)
    except DomainError:
        row["sup_error"] = row["pu_deviation"] = None
    row["lipschitz_hat"] = lipschitz_probe(ap, 0.5 * sch.T, cfg.grid.lipschitz_pairs, rng, radius=R)[0]
    row["lipschitz_budget"] = ap.lipschitz_budget[0]
    if latent.d == 1:
        t = 0.5 * sch.T
        net = compile_relu_1d(ap, t)
        zz = np.linspace(-R, R, 10_000)[:, None]
        row["relu_deviation"] = float(np.max(np.abs(net.f(zz, t) - ap(zz, t))))
    return row


def run_sweep_grid(cfg, out, parallel=0):
    root = np.random.SeedSequence(cfg.seed)
    point_ss = root.spawn(len(cfg.sweep))
    target = on_support_target(cfg.latent())
    n_space = 41 if cfg.model.d == 1 else 15
    tau = measure_time_lipschitz(target, cfg.grid.R, cfg.schedule.T, n_space=n_space)
    tasks = [(cfg, N1, N2, tau, s) for (N1, N2), s in zip(cfg.sweep, point_ss)]
    rows = _map(_sweep_grid_point, tasks, parallel)
    checks = []
    for r in rows:
        tag = f"N1={r['N1']},N2={r['N2']}"
        if r["sup_error"] is not None:
            checks.append(_check(f"grid.sup_error[{tag}]", r["sup_error"] <= r["error_budget"] + 1e-9,
                                 r["sup_error"], r["error_budget"]))
            checks.append(_check(f"grid.partition_of_unity[{tag}]", r["pu_deviation"] <= 1e-12,
                                 r["pu_deviation"], 1e-12))
        lim = r["lipschitz_budget"] * (1 + 1e-6)
        checks.append(_check(f"grid.lipschitz[{tag}]", r["lipschitz_hat"] <= lim, r["lipschitz_hat"], lim))
        if "relu_deviation" in r:
            checks.append(_check(f"grid.relu_compilation[{tag}]", r["relu_deviation"] <= 1e-10,
                                 r["relu_deviation"], 1e-10))
    cols = ["N1", "N2", "sup_error", "error_budget", "tau_hat", "pu_deviation",
            "lipschitz_hat", "lipschitz_budget", "relu_deviation"]
    plot = dict(
        xs=[r["N1"] for r in rows],
        series={"sup error": [r["sup_error"] if r["sup_error"] is not None else np.nan for r in rows],
                "error budget": [r["error_budget"] for r in rows]},
        xlabel="N1", ylabel="error", title="grid approximant error",
    )
    passed = _write_outputs(out, cfg, cols, rows, checks, {"tau_hat": tau}, plot)
    return RunResult(passed, checks, rows, Path(out))


_RUNNERS = {
    "validate": run_validate,
    "sweep_n": run_sweep_n,
    "sweep_t0": run_sweep_t0,
    "sweep_grid": run_sweep_grid,
}


def run_experiment(cfg, out, parallel=0):
    return _RUNNERS[cfg.experiment](cfg, out, parallel)
