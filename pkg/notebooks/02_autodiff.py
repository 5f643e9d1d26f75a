# %% [markdown]
# # The numpy autodiff tape
#
# Every op records a backward closure. `backward` walks the tape once;
# `grad_check` compares against central differences taken in extended
# precision.

# %%
import numpy as np

from rgat_absa import nn

rng = np.random.default_rng(0)
W = nn.parameter(rng.normal(size=(3, 4)))
x = rng.normal(size=(4, 2))

y = nn.sigmoid(W @ x)
loss = nn.sum(y * y)
nn.backward(loss)
print("loss", float(loss.data))
print("dL/dW\n", W.grad)

# %%
err = nn.grad_check(lambda: nn.sum(nn.sigmoid(W @ x) * nn.sigmoid(W @ x)), [W])
print(f"relative error {err:.2e}")

# %% [markdown]
# A second `backward` on the same graph is refused.

# %%
try:
    nn.backward(loss)
except RuntimeError as exc:
    print("refused:", exc)

# %% [markdown]
# ## BiLSTM
#
# The LSTM is one fused op with hand-written backpropagation through time.
# Padding positions stay zero and do not leak into the backward direction.

# %%
H, D = 3, 4
shapes = ((D, 4 * H), (H, 4 * H), (4 * H,)) * 2
p = nn.BiLstmParams(*(nn.parameter(0.5 * rng.normal(size=s)) for s in shapes))
batch = nn.parameter(rng.normal(size=(2, 5, D)))
out = nn.bilstm(p, batch, lengths=[5, 2])
print(out.shape)
print(np.round(out.data[1], 3))

params = [batch, p.fw_W, p.fw_U, p.bw_W]
weights = rng.normal(size=out.shape)
print("BiLSTM grad check", nn.grad_check(lambda: nn.sum(nn.bilstm(p, batch, [5, 2]) * weights), params))

# %% [markdown]
# ## Adam
#
# After bias correction the first step moves each coordinate by about `lr`.

# %%
store = nn.ParamStore()
store.add("w", np.zeros(3))
store["w"].grad = np.array([0.5, -2.0, 1e-3])
nn.adam_step(store, lr=1e-3)
print(store["w"].data)
