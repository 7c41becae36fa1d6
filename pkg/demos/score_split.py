"""
Score of data living on a subspace
==================================

Data x = A z sits on the column space of A. Once noise is added, the score
splits into a part along A, which only depends on the latent law, and a part
orthogonal to A that pulls points back with strength 1/h(t).
"""
import numpy as np

from subspace_diffusion import LatentDistribution, SubspaceModel, random_orthonormal
from subspace_diffusion.oracle_scores import gaussian_score, quadrature_score, score_moment_identity
from subspace_diffusion.sde_core import alpha_h

rng = np.random.default_rng(0)

# A line in the plane with a wide Gaussian along it
model = SubspaceModel(np.array([[1.0], [0.0]]), LatentDistribution.gaussian([4.0]))
t = np.log(2.0)  # alpha^2 = 1/2, h = 1/2
s = gaussian_score(model, t, np.array([1.0, 1.0]))
print("along A     ", s.s_par)
print("orthogonal  ", s.s_perp)
print("total       ", s.total)

# The closed form and brute-force quadrature over the latent agree
A = random_orthonormal(16, 2, rng)
model = SubspaceModel(A, LatentDistribution.gaussian([4.0, 1.0]))
x = 1.5 * rng.standard_normal(16)
for t in (0.05, 0.5, 3.0):
    a = gaussian_score(model, t, x).total
    b = quadrature_score(model, t, x).total
    print(f"t={t:<5} max |closed - quadrature| = {np.max(np.abs(a - b)):.1e}")

# The orthogonal part is exactly -(I - AA^T) x / h, so it blows up as t -> 0
for t in (1.0, 0.1, 0.01):
    _, h = alpha_h(t)
    perp = gaussian_score(model, t, x).s_perp
    print(f"t={t:<5} |orthogonal score| = {np.linalg.norm(perp):8.2f}   1/h = {1 / h:7.2f}")

# E[grad log p_t(Z_t) Z_t^T] = -I for any latent law, here a two-bump mixture
mix = LatentDistribution.mixture([0.3, 0.7], [[1.5, 0.0], [-1.0, 1.0]], [0.5, 1.2])
res = score_moment_identity(mix, 0.5, 100_000, rng)
print("moment identity estimate\n", np.round(res.estimate, 3))
print("deviation / se\n", np.round(res.deviation / res.se, 2))
