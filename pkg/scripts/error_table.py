"""Error and timing tables for classical estimators (and optionally a model).

    python scripts/error_table.py data/kodak data/mcmaster --model model.dsqz
    python scripts/error_table.py --synthetic        # no data needed
"""

import argparse
import tempfile
from pathlib import Path

from diffsigma.datasets import write_corpus
from diffsigma.evaluation import EvalReport, classical, cnn, evaluate, render_report, time_estimator
from diffsigma.imageio import scan_dataset
from diffsigma.model import load_model

LEVELS = (5, 10, 15, 20, 25)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data", nargs="*")
    ap.add_argument("--model")
    ap.add_argument("--synthetic", action="store_true", help="use two generated datasets")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write the error rows as CSV")
    args = ap.parse_args()

    ests = [cnn(load_model(args.model))] if args.model else []
    ests += [classical("direct"), classical("mad"), classical("patch_min")]
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(d) for d in args.data]
        if args.synthetic or not dirs:
            for name, n, seed in (("synthA", 24, 1), ("synthB", 18, 2)):
                write_corpus(Path(tmp) / name, n, 256, 256, seed=seed)
                dirs.append(Path(tmp) / name)
        report = EvalReport()
        for d in dirs:
            manifest = scan_dataset(d)
            report = report.extend(evaluate(ests, manifest, LEVELS, seed=args.seed))
            report.timing.extend(time_estimator(ests, manifest, 25.0, seed=args.seed))
    print(render_report(report, "text").decode(), end="")
    if args.csv:
        Path(args.csv).write_bytes(render_report(report, "csv"))


if __name__ == "__main__":
    main()
