#!/usr/bin/env python3
"""End-to-end demo through the command line: simulate, ingest, fit, predict, report.

Usage: python3 scripts/demo_pipeline.py [WORKDIR]
"""

import sys
from pathlib import Path

from hiddengenome.cli import main


def run(*argv: str) -> None:
    code = main(list(argv))
    if code:
        sys.exit(f"hiddengenome {argv[0]} exited with {code}")


def demo(work: Path) -> None:
    sim, fit, out = work / "sim", work / "fit", work / "out"
    run("simulate", "--out", str(sim), "--seed", "7", "--n-classes", "4", "--n-train", "600",
        "--n-test", "150", "--n-recorded", "1500", "--n-unseen", "300")
    muts, test_ids = str(sim / "mutations.tsv"), str(sim / "test_ids.txt")
    run("ingest", "--out", str(work / "ingest"), "--mutations", muts, "--test-ids", test_ids)
    run("fit", "--out", str(fit), "--mutations", muts, "--test-ids", test_ids, "--folds", "5", "--n-lambda", "20")
    run("predict", "--out", str(out), "--mutations", muts, "--test-ids", test_ids, "--model", str(fit / "model.json"))
    run("report", "--out", str(out), "--model", str(fit / "model.json"))
    print(f"outputs under {work}")
    print((out / "predictions.csv").read_text().splitlines()[0])


if __name__ == "__main__":
    demo(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run"))
