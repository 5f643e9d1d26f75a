# %% [markdown]
# # Training, ablation and analysis on synthetic data
#
# Real experiments run through the same functions (or the `rgat-absa` CLI)
# on preprocessed SemEval/Twitter files with GloVe vectors. Here everything
# runs on the toy corpus in a few seconds.

# %%
import tempfile
from pathlib import Path

from rgat_absa import harness
from rgat_absa.harness import RunConfig
from rgat_absa.synthetic import synthetic_instances

data = synthetic_instances(50)
small = dict(hidden=32, att_heads=2, rel_heads=2, gate_dim=16, rel_dim=16, dropout=0.0)
out = Path(tempfile.mkdtemp())
cfg = RunConfig.from_dict(dict(emb_dim=16, epochs=60, patience=60, out=str(out / "run"), hyper=small))

# %%
res = harness.train(cfg, data, data)
for h in res.history[::10]:
    print(f"epoch {h['epoch']:3d} loss {h['train_loss']:8.3f} acc {h['test_accuracy']:.2f}")
print("best epoch", res.best_epoch)
print(res.best_report.to_text())

# %% [markdown]
# The checkpoint reloads to the same predictions.

# %%
again = harness.evaluate_checkpoint(res.checkpoint, data)
print("reloaded accuracy", again.accuracy)

# %% [markdown]
# ## Ablation grid
#
# Ordinary vs reshaped trees, crossed with the GAT, R-GAT and R-GAT without
# `n:con` edges.

# %%
short = RunConfig.from_dict({**cfg.to_dict(), "epochs": 15, "patience": 15})
table = harness.ablate(short, seeds=[1], train_set=data[:30], test_set=data[30:])
print(table.to_text())

# %% [markdown]
# ## Errors and aspect distance
#
# A briefly trained model still makes mistakes; `export_errors` samples them.

# %%
weak = harness.train(RunConfig.from_dict({**cfg.to_dict(), "epochs": 2, "out": str(out / "weak")}), data, data)
for err in harness.export_errors(weak.model, data, k=3, seed=0):
    print(err["id"], err["aspect_text"], err["gold"], "->", err["pred"])

# %% [markdown]
# The distance analysis only looks at sentences with several aspects. Each
# aspect is paired with its nearest sibling in embedding space and accuracy
# is reported per distance bucket.

# %%
from rgat_absa.corpus import Instance
from rgat_absa.deptree import DepParse

tokens = ("food", "and", "wine", "were", "great")
parse = DepParse(tokens, (5, 3, 1, 5, 0), ("nsubj", "cc", "conj", "cop", "root"))
multi = [Instance("m1#0", tokens, (1, 1), "positive", parse),
         Instance("m1#1", tokens, (3, 3), "positive", parse)]
tokens2 = ("staff", "and", "decor", "were", "awful")
parse2 = DepParse(tokens2, (5, 3, 1, 5, 0), ("nsubj", "cc", "conj", "cop", "root"))
multi += [Instance("m2#0", tokens2, (1, 1), "negative", parse2),
          Instance("m2#1", tokens2, (3, 3), "negative", parse2)]
model = harness.build_model(cfg, data + multi)
analysis = harness.multi_aspect_analysis(model, multi, bucket_edges=[0.5])
print(analysis.to_csv())
