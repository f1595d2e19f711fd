"""How does labelling degrade when classes overlap?

Runs the oracle grid on the six-class synthetic set, in which walking /
walking upstairs and jumping / jogging sit close together in frequency,
and on a three-class subset with no overlapping pair. Prints accuracy per
grid cell and, for the 2-D euclidean 25-example cell, the share of
misclassifications that stay inside the overlapping pairs.

    python3 demos/six_class_study.py [--out runs]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from senselabel.evaluation import off_diagonal_share
from senselabel.pipeline import Pipeline, RunConfig
from senselabel.synthetic import OVERLAPPING_PAIRS

CONFIG = Path(__file__).resolve().parent / "configs/six_class.toml"
THREE = ["walking", "running", "cycling"]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs")
    args = parser.parse_args()
    six = Pipeline(RunConfig.load(CONFIG, [(["out"], str(Path(args.out).resolve()))]))
    three = Pipeline(RunConfig.load(CONFIG, [(["out"], str(Path(args.out).resolve())), (["data", "classes"], THREE)]))
    tables = {}
    for name, pipe in (("6 classes", six), ("3 classes", three)):
        rows = json.loads(pipe.grid().path("grid.json").read_text())["configurations"]
        tables[name] = {(r["dim"], r["metric"], r["examples"]): r["accuracy"] for r in rows}
    print(f"{'dim':>3} {'metric':>10} {'k':>3} {'3 classes':>10} {'6 classes':>10}")
    for cell in tables["6 classes"]:
        u, m, k = cell
        print(f"{u:>3} {m:>10} {k:>3} {tables['3 classes'][cell]:>10.3f} {tables['6 classes'][cell]:>10.3f}")

    report = json.loads(six.evaluate(2, "euclidean", 25).path("report.json").read_text())
    names = report["class_names"]
    counts = np.array(report["confusion_matrix"]["counts"])
    groups = [[names.index(a), names.index(b)] for a, b in OVERLAPPING_PAIRS]
    print("\nconfusion (rows true, columns predicted) for dim 2, euclidean, 25 examples:")
    for name, row in zip(names, counts):
        print(f"  {name:>17s} {row[:len(names)]}")
    print(f"share of errors inside the overlapping pairs: {off_diagonal_share(counts, groups):.2f}")


if __name__ == "__main__":
    main()
