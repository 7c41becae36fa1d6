"""
A grid approximant of the on-support score
==========================================

The function f that the network must learn can be approximated by a sum of
its values at grid points, weighted by a product of trapezoids. Refining the
grid shrinks the worst-case error at the rate of the Lipschitz budget. In
one dimension the trapezoid sum is exactly a two-layer ReLU network.
"""
import numpy as np

from subspace_diffusion import LatentDistribution, TimeSchedule
from subspace_diffusion.constructive_approx import (
    build_approximant,
    compile_relu_1d,
    interior_probe_grid,
    measure_time_lipschitz,
    on_support_target,
    sup_error,
)
from subspace_diffusion.svgplot import line_chart

sched = TimeSchedule(T=5.0, t0=0.1, eta=0.01)
latent = LatentDistribution.gaussian([4.0])
g = on_support_target(latent)
R = 3.0
tau = measure_time_lipschitz(g, R, sched.T)
print(f"time Lipschitz constant of g on the cube: {tau:.3f}")

sizes = [4, 8, 16, 32, 64]
errs, budgets = [], []
for N in sizes:
    ap = build_approximant(g, R, N, N, sched, beta=latent.beta, tau_hat=tau)
    z, t = interior_probe_grid(ap, 81, 21, t_min=sched.t0)
    errs.append(sup_error(ap, g, z, t))
    budgets.append(ap.error_budget)
    print(f"N1=N2={N:3d}  sup error {errs[-1]:.4f}  budget {budgets[-1]:.4f}")

# the same slice as a ReLU network with 4 units per grid cell
net = compile_relu_1d(ap, 2.5)
zz = np.linspace(-R, R, 10_000)[:, None]
print("ReLU vs trapezoid sum:", np.max(np.abs(net.f(zz, 2.5) - ap(zz, 2.5))))

line_chart("grid_error.svg", sizes, {"sup error": errs, "budget": budgets},
           xlabel="N1 = N2", ylabel="error", title="grid approximant")
print("wrote grid_error.svg")
