# %% [markdown]
# # Pretraining loss kernels
#
# Reference implementations of the contrastive, L1, perceptual and adversarial
# terms. Each returns its analytic gradient, which we compare with finite differences.

# %%
import math

import numpy as np

from pfbench.losses import adversarial_terms, info_nce, l1_loss, perceptual_l1, total_pretrain_loss

gen = np.random.default_rng(0)

# %% [markdown]
# If the positive looks no more similar than three negatives, the loss is log 4.

# %%
a = gen.normal(size=16)
loss, _ = info_nce(a, a, [a, a, a])
print(loss, math.log(4))

# %% [markdown]
# Gradient check on the anchor.

# %%
p, negs = gen.normal(size=16), gen.normal(size=(5, 16))
loss, grad = info_nce(a, p, negs, tau=0.1)
h = 1e-6
num = np.array([(info_nce(a + h * e, p, negs, 0.1)[0] - info_nce(a - h * e, p, negs, 0.1)[0]) / (2 * h)
                for e in np.eye(16)])
print("max gradient difference", np.abs(num - grad.anchor).max())

# %% [markdown]
# The other terms.

# %%
x, y = gen.random((3, 8, 8)), gen.random((3, 8, 8))
print("L1", l1_loss(x, y)[0])
print("perceptual", perceptual_l1([x], [y])[0])
adv = adversarial_terms(np.full(8, 0.5), np.full(8, 0.5))
print("discriminator objective at D = 0.5:", round(adv["disc_objective"], 4))
print("total", total_pretrain_loss({"recon": 0.1, "enhance": 0.2, "cont": 1.3, "adv": 0.7, "perceptual": 0.4}))
