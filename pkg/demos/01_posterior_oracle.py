"""
Posterior kernels of the reference chain
========================================

The zero-drift reference chain adds independent Gaussian increments with
variance 2*gamma_k at step k. Conditioning on one endpoint and a neighbour
gives Gaussian kernels whose means and variances are used by the terminal and
flow parameterizations. Here they are compared against brute-force
conditioning of the joint Gaussian law of the whole chain.
"""
import numpy as np

from bridgelab import bridge
from bridgelab.schedules import make_schedule, posterior_variances

sched = make_schedule(8, 1e-3, 1e-2)
print("step sizes:", np.round(sched.gamma, 5))
print("cumulative:", np.round(sched.gamma_bar, 5))

# %%
# Joint covariance of (x_1..x_N) given x_0 = 0: Cov(x_i, x_j) = 2 * gamma_bar[min(i, j)].
t = 2.0 * sched.gamma_bar[1:]
cov = np.minimum.outer(t, t)


def brute_force_backward(k, x0, x_next):
    """Mean/variance of x_k given x_0 and x_{k+1}, by solving the normal equations."""
    if k == 0:
        return x0, 0.0
    i, j = k - 1, k
    w = cov[i, j] / cov[j, j]
    return x0 + w * (x_next - x0), cov[i, i] - w * cov[i, j]


rng = np.random.default_rng(0)
for k in range(sched.N):
    x0, x_next = rng.standard_normal(2)
    m_ref, v_ref = brute_force_backward(k, x0, x_next)
    m = bridge.posterior_mean_backward(sched, k, x_next, x0)
    v = posterior_variances(sched, k)[0]
    print(f"k={k}: mean {m:+.6f} (brute force {m_ref:+.6f})  var {v:.3e} ({v_ref:.3e})")

# %%
# The first backward kernel is a point mass on x_0 and the last forward
# kernel is a point mass on x_N.
print("boundary variances:", posterior_variances(sched, 0)[0], posterior_variances(sched, 7)[1])
