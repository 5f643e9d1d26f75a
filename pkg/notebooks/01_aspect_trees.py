# %% [markdown]
# # Aspect-oriented dependency trees
#
# A parse of "great food but the service was dreadful" is reshaped around
# each of its two aspects. Direct neighbours of the aspect keep their
# dependency label; everything else hangs off the root with an `n:con`
# label giving its distance in the original tree.

# %%
from rgat_absa.deptree import DepParse, TreeView, tree_distance
from rgat_absa.reshape import RelationVocab, reshape, to_dot, to_ordinary_graph

parse = DepParse(
    ("great", "food", "but", "the", "service", "was", "dreadful"),
    (2, 0, 7, 5, 7, 7, 2),
    ("amod", "root", "cc", "det", "nsubj", "cop", "conj"),
)
view = TreeView.from_parse(parse)
print("distance food -> service:", tree_distance(view, 2, 5))

# %%
for aspect in [(2, 2), (5, 5)]:
    tree = reshape(parse, aspect)
    print(f"\naspect {parse.tokens[aspect[0] - 1]!r}")
    for j, label, direction in tree.children:
        print(f"  {parse.tokens[j - 1]:<10} {label:<7} {direction}")

# %% [markdown]
# With `mark_reverse`, edges where the child headed the aspect get a `:rev`
# suffix, so "service" is `nsubj:rev` when "dreadful" is the aspect.

# %%
print(reshape(parse, (7, 7), mark_reverse=True).labels)

# %% [markdown]
# Lowering `n_max` folds distant words into `∞:con`.

# %%
print(reshape(parse, (4, 4), n_max=1).labels)

# %% [markdown]
# The relation inventory lists real labels first, then the virtual ones and `self`.

# %%
trees = [reshape(parse, (2, 2)), reshape(parse, (5, 5))]
vocab = RelationVocab({lab for t in trees for lab in t.labels}, n_max=4)
print(vocab.labels)
print("ordinary edges:", to_ordinary_graph(parse).edges)

# %%
print(to_dot(trees[0], parse.tokens))
