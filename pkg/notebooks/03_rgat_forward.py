# %% [markdown]
# # Inside one R-GAT forward pass
#
# A toy model over synthetic two-clause reviews. The trace exposes the
# attention weights of the attentional heads, the relation gates and the
# normalised relational weights around the aspect root (node 0).

# %%
import numpy as np

from rgat_absa import rgat
from rgat_absa.corpus import build_vocab, embedding_matrix
from rgat_absa.rgat import Hyper, Model
from rgat_absa.synthetic import synthetic_instances

insts = synthetic_instances(6)
hyper = Hyper(hidden=16, att_heads=2, rel_heads=2, gate_dim=8, rel_dim=8, dropout=0.0)
vocab = build_vocab(insts)
rel_vocab = rgat.build_relation_vocab(rgat.prepare(insts, hyper), hyper.n_max)
model = Model(hyper, vocab, rel_vocab, embedding_matrix(vocab, 8), seed=0)
print(" ".join(insts[0].tokens), "| aspect:", insts[0].aspect_tokens, "| gold:", insts[0].label)

# %%
examples = model.prepare(insts)
print("edges of the first graph:", examples[0].edges)
batch = model.batch(examples)
trace = {}
probs = model.forward(batch, trace=trace).data
print("class probabilities\n", np.round(probs, 3))

# %% [markdown]
# Row 0 of each matrix is the root's view of the sentence. Non-neighbours
# get exactly zero weight.

# %%
tokens = ["<root>"] + list(insts[0].tokens)
alpha = trace["alpha"][0][0, 0, 0]  # layer 0, instance 0, head 0, root row
beta = trace["beta"][0][0, 0, 0]
for tok, a, b in zip(tokens, alpha, beta):
    print(f"{tok:<8} alpha {a:.3f}  beta {b:.3f}")

# %%
gates = trace["gates"][0]
for label, g in zip(rel_vocab.labels, gates):
    print(f"{label:<8} gate per head {np.round(g, 3)}")

# %% [markdown]
# The relational heads weigh neighbours by label alone, so neighbours that
# share a label always share a weight.
