"""
Mining threshold rules with a decision tree
===========================================

Labelled readings in, a pruned tree and an equivalent rule file out.
"""

import numpy as np

from aqcep.mining import (
    MiningParams,
    dump_tree,
    holdout_split,
    mine_rules,
    rule_accuracy,
)
from aqcep.pollutants import POLLUTANTS
from aqcep.rules import print_rules

rng = np.random.default_rng(0)
n = 1500
X = rng.uniform(0, 200, (n, len(POLLUTANTS)))

# Label by PM2.5 (column 0) and O3 (last column), then flip 5% of the labels.
y = np.where(X[:, 0] <= 30, "Good", np.where(X[:, -1] > 100, "Poor", "Satisfactory"))
noise = rng.random(n) < 0.05
y[noise] = rng.choice(["Good", "Satisfactory", "Poor"], noise.sum())

params = MiningParams(max_depth=4, min_leaf=20)
tree, rules = mine_rules(X, y.tolist(), params)
print(dump_tree(tree))
print(print_rules(rules))

# Accuracy on the same seeded holdout the pruner used.
_, hold = holdout_split(n, params.holdout_fraction, params.seed)
print(f"holdout accuracy {rule_accuracy(rules, X[hold], y[hold].tolist()):.3f}")

# Leaves partition the feature space, so every reading matches exactly one rule.
probe = rng.uniform(0, 400, (2000, len(POLLUTANTS)))
hits = [sum(r.matches(dict(zip(POLLUTANTS, row))) for r in rules) for row in probe]
print("rules matched per probe:", set(hits))
