#!/usr/bin/env python3
"""
Heart Benchmark Script
Fits the m1 model on the Heart (Statlog) table over several seeds and
reports aligned micro / macro precision and silhouette

Usage:
    python scripts/heart_benchmark.py heart.csv [n_seeds]

The CSV needs a header row with the columns of fixtures/heart_schema.json
plus a ``disease`` column holding the class (1 absent, 2 present).
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from mixclus.data import load_dataset, load_schema_file  # noqa: E402
from mixclus.gaussnet import Architecture  # noqa: E402
from mixclus.log_setup import configure_logging  # noqa: E402
from mixclus.metrics import gower_matrix, precision_scores, silhouette  # noqa: E402
from mixclus.trainer import FitConfig, fit  # noqa: E402

TRUTH_COLUMN = "disease"


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    csv_path = Path(sys.argv[1])
    n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    configure_logging("WARNING")

    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    truth = frame[TRUTH_COLUMN].to_numpy()
    dataset = load_dataset(frame.drop(columns=[TRUTH_COLUMN]).to_csv(index=False),
                           load_schema_file(str(ROOT / "fixtures" / "heart_schema.json")))
    config = json.loads((ROOT / "fixtures" / "heart_m1.json").read_text(encoding="utf-8"))
    arch = Architecture.from_dict(config["architecture"], mode=config["mode"])
    distances = gower_matrix(dataset)

    print("=" * 70)
    print(f"Heart benchmark: n={dataset.n}, {n_seeds} seeds, architecture {arch.to_dict()}")
    print("=" * 70)
    rows = []
    for seed in range(n_seeds):
        started = time.time()
        result = fit(dataset, FitConfig(architecture=arch, seed=seed, max_iter=config["max_iter"],
                                        patience=config["patience"],
                                        selection_iters=tuple(config["selection_iters"])))
        micro, macro = precision_scores(result.labels, truth)
        sil = silhouette(result.labels, distances)
        rows.append((micro, macro, sil))
        print(f"seed {seed}: micro {micro:.3f}  macro {macro:.3f}  silhouette {sil:.3f}  "
              f"({time.time() - started:.1f}s)")

    scores = np.array(rows)
    print("-" * 70)
    for name, column in zip(("micro", "macro", "silhouette"), scores.T):
        print(f"{name:>10}: {column.mean():.3f} ({column.std():.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
