#!/usr/bin/env python3
"""
Synthetic Data Script
Writes the seeded synthetic datasets (CSV + schema + truth labels) used by
the tests and the README walkthrough
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from mixclus.synthetic import factor_data, two_binary_toy, two_group_mixed  # noqa: E402

OUT_DIR = Path(__file__).parent.parent / "data" / "synthetic"


def dump(name: str, data) -> None:
    data_path = OUT_DIR / f"{name}.csv"
    data_path.write_text(data.to_csv(), encoding="utf-8")
    (OUT_DIR / f"{name}_schema.json").write_text(data.schema_json(), encoding="utf-8")
    if data.truth is not None:
        lines = ["truth"] + [str(int(v)) for v in data.truth]
        (OUT_DIR / f"{name}_truth.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"✓ {name}: {len(data.frame)} rows -> {data_path}")


def main(seed: int = 0) -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    print("=" * 70)
    print(f"Writing synthetic datasets (seed {seed}) to {OUT_DIR}")
    print("=" * 70)
    dump("two_group", two_group_mixed(seed=seed))
    dump("factor", factor_data(seed=seed)[0])
    dump("two_binary", two_binary_toy(seed=seed))
    return 0


if __name__ == "__main__":
    sys.exit(main(int(sys.argv[1]) if len(sys.argv) > 1 else 0))
