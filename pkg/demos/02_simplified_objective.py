"""
Original vs simplified regression targets
=========================================

The original bridge target for the backward net needs two evaluations of the
frozen forward net per training pair. The simplified target is just the
neighbouring state on the cached path. When the frozen net moves every point
by the same constant, the two targets coincide exactly; for a general net they
differ by a term that grows with the step size.
"""
import numpy as np

from bridgelab.objectives import fresh_predictor, target_dsb_original, target_s_dsb
from bridgelab.smallnet import DriftNet

rng = np.random.default_rng(0)
x_k, x_next = rng.standard_normal((2, 10_000, 2))

# %%
# A frozen forward chain F(k, x) = x + const: a net with zero weights and a bias.
net = DriftNet(n_steps=8, hidden=(), emb_dim=0)
net.params["b0"] = np.array([0.03, -0.02])
frozen = fresh_predictor(net, "dsb", "forward", 8)
original = target_dsb_original(frozen, 3, x_k, x_next, "backward")
simple = target_s_dsb(x_k, x_next, "backward")
print("constant drift: max |original - simplified| =", np.abs(original - simple).max())
print("frozen-net evaluations for 10k pairs:", frozen.nfe, "(the simplified target needs none)")

# %%
# A nonlinear frozen net: the targets now disagree, more so for larger steps.
wiggly = DriftNet(n_steps=8, hidden=(32,), emb_dim=4, seed=1, zero_last=False)
frozen = fresh_predictor(wiggly, "dsb", "forward", 8)
for step in (1e-3, 1e-2, 1e-1):
    x_next = x_k + np.sqrt(2 * step) * rng.standard_normal(x_k.shape)
    gap = target_dsb_original(frozen, 3, x_k, x_next, "backward") - target_s_dsb(x_k, x_next, "backward")
    print(f"step variance {step:g}: mean squared target gap {np.mean(np.sum(gap**2, 1)):.2e}")
