"""Full model against its three ablations on the label-shift CSBM pair.

random_link inserts as many edges per epoch as the full run did, drawn at
random from the same candidate sets. Takes about 20 s per seed.

Run: python demos/ablation.py [num_seeds]
"""

import sys

import numpy as np

from graphbridge import csbm
from graphbridge import trainer as T


def main(num_seeds=3):
    rows = []
    for seed in range(num_seeds):
        s, t = csbm.generate_shift_pair(csbm.shift_pair_spec(400, seed=seed))
        base = T.TrainConfig(epochs=100, seed=seed)
        full = T.fit(s, t, base)
        budget = [r.inserted_edge_count for r in full.history]
        row = {"full": full.final.target_accuracy}
        for mode in ("gcn_da", "random_link", "no_mi"):
            extra = {"random_link_budget": budget} if mode == "random_link" else {}
            row[mode] = T.fit(s, t, T.with_mode(base, mode, **extra)).final.target_accuracy
        rows.append(row)
        print(f"seed {seed}: " + "  ".join(f"{m} {a:.4f}" for m, a in row.items()), flush=True)
    print("mean:   " + "  ".join(f"{m} {np.mean([r[m] for r in rows]):.4f}" for m in rows[0]))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
