"""Regenerate the shipped mini-dataset under data/mini.

Besides the generated inputs this runs ingestion and audit sampling once in a
scratch store and fills the audit sheet from the planted truth, standing in
for a human annotator.

    python3 scripts/make_mini_dataset.py [--out data/mini]
"""

import argparse
import shutil
import tempfile
from pathlib import Path

from countyimpact.cli import main as cli
from countyimpact.synthetic import MINI_EVENTS, fill_audit_sheet, make_mini_dataset, write_config

ROOT = Path(__file__).resolve().parents[1]


def build(out: Path) -> None:
    if out.exists():
        shutil.rmtree(out)
    make_mini_dataset(out)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = str(out / "config.ini")
        for cmd in ("ground-truth", "ingest-news", "audit-sample"):
            code = cli([cmd, "-c", cfg, "--store", tmp, "-q"])
            if code != 0:
                raise SystemExit(f"{cmd} failed with exit code {code}")
        fill_audit_sheet(Path(tmp) / "assessments" / "audit_sheet.csv", out / "planted_truth.json",
                         out / "audit_verdicts.csv")
    write_config(out, MINI_EVENTS, audit_sheet="audit_verdicts.csv")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "data" / "mini")
    build(ap.parse_args().out)
