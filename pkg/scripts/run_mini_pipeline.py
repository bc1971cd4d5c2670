"""Run the whole pipeline on the shipped mini-dataset and print the headline tables.

    python3 scripts/run_mini_pipeline.py [--store /tmp/mini-store]
"""

import argparse
import csv
import sys
import tempfile
from pathlib import Path

from countyimpact.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def show(path: Path, columns) -> None:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    print(f"\n{path.name}")
    print("  " + "  ".join(columns))
    for r in rows:
        print("  " + "  ".join(str(r[c]) for c in columns))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--store", type=Path, default=None)
    ap.add_argument("--config", type=Path, default=ROOT / "data" / "mini" / "config.ini")
    args = ap.parse_args()
    store = args.store or Path(tempfile.mkdtemp(prefix="mini-store-"))
    code = cli(["run-all", "-c", str(args.config), "--store", str(store), "-q"])
    print(f"run-all exit code {code}; store at {store}")
    reports = store / "reports"
    show(reports / "figure3.csv", ["model", "window_days", "task", "macro_f1_mean", "random_baseline"])
    show(reports / "table3.csv", ["model", "source", "category", "event_2", "event_9"])
    show(reports / "table2.csv", ["event_id", "sample_size", "geolocation_acc", "relevance_acc"])
    return code


if __name__ == "__main__":
    sys.exit(main())
