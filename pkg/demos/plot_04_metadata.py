"""
Scan metadata and conditioning vectors
======================================

Parse prompts into structured metadata, featurize them and look at the
ablations used in the experiments.
"""

# %%
from contextrecon import featurize, parse_prompt, to_prompt
from contextrecon.metadata import ablate
from contextrecon.phantom import generate_dataset

md = generate_dataset(1, seed=11, grid=(64, 64), min_pathologies=1)[0].metadata
print(to_prompt(md))
assert parse_prompt(to_prompt(md)) == md

# %%
# Ablation removes fields in a fixed order. The empty metadata maps to the
# all-zero vector the prior treats as unconditional.
for level in ("full", "no_mr_params", "no_contrast", "no_slice", "pathology_only",
              "unconditional"):
    reduced = ablate(md, level)
    vec = featurize(reduced)
    print("%-15s %-60s nonzero=%d" % (level, to_prompt(reduced)[:60],
                                       int((vec.values != 0).sum())))
