"""A tour of the reverse-mode tape.

Builds a tiny two-layer network by hand, runs one backward pass, and checks
a few gradients against central finite differences.
"""

import numpy as np

from mstkd import autodiff as ad

rng = np.random.default_rng(0)

# parameters and a batch of two 3-vectors
w1 = rng.normal(size=(3, 4))
b1 = np.zeros(4)
w2 = rng.normal(size=(4, 2))
x = rng.normal(size=(2, 3))

tape = ad.Tape()
tw1, tb1, tw2 = tape.param(w1), tape.param(b1), tape.param(w2)
h = ad.leaky_relu(ad.affine(tape.constant(x), tw1, tb1), 0.01)
emb = ad.l2_normalize(ad.matmul(h, tw2))
loss = ad.mean_all(ad.mul(emb, emb))  # == 1 exactly: rows are unit norm

print(f"forward value: {float(loss.values):.6f} (mean of squared unit rows * 1/width)")
print(f"tape recorded {len(tape.nodes)} nodes, in topological order by construction")

tape.backward(loss)
print(f"d(loss)/d(loss) seeded to {float(loss.grad)}")

# unit-norm rows make this loss constant, so every gradient must vanish
print(f"max |grad w1| = {np.abs(tw1.grad).max():.2e}  (constant loss => ~0)")

# a non-degenerate loss: pull the first embedding coordinate up
tape = ad.Tape()
tw1, tb1, tw2 = tape.param(w1), tape.param(b1), tape.param(w2)
h = ad.leaky_relu(ad.affine(tape.constant(x), tw1, tb1), 0.01)
emb = ad.l2_normalize(ad.matmul(h, tw2))
loss = ad.mean_all(ad.pick(emb, np.array([0, 0])))
tape.backward(loss)


def loss_fn(w):
    hh = x @ w + b1
    hh = np.where(hh >= 0, hh, 0.01 * hh)
    e = hh @ w2
    e = e / np.linalg.norm(e, axis=1, keepdims=True)
    return float(np.mean(e[:, 0]))


i, j = 1, 2
eps = 1e-6
wp, wm = w1.copy(), w1.copy()
wp[i, j] += eps
wm[i, j] -= eps
numeric = (loss_fn(wp) - loss_fn(wm)) / (2 * eps)
print(f"dloss/dw1[{i},{j}]: tape {tw1.grad[i, j]:+.8f}  "
      f"finite differences {numeric:+.8f}")
