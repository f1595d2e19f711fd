"""Does contrastive pre-training make nearest-example labelling work?

Runs the two-class synthetic study twice: once with a pre-trained encoder
and once with the same encoder left at its random initialisation. Both
runs project to 2-D with t-SNE and label held-out windows with the oracle
annotator (25 examples per class, euclidean distance).

    python3 demos/separation_study.py [--out runs]
"""
import argparse
import json
import time
from pathlib import Path

from senselabel.pipeline import Pipeline, RunConfig

CONFIG = Path(__file__).resolve().parent / "configs/two_class.toml"


def accuracy(pipe):
    stage = pipe.evaluate()
    return json.loads(stage.path("report.json").read_text())["accuracy"], stage.directory


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs")
    args = parser.parse_args()
    for label, overrides in (("pre-trained", []), ("random init", [(["pretrain", "epochs"], 0)])):
        config = RunConfig.load(CONFIG, [(["out"], str(Path(args.out).resolve())), *overrides])
        start = time.perf_counter()
        acc, where = accuracy(Pipeline(config))
        print(f"{label:12s} accuracy {acc:.3f}  ({time.perf_counter() - start:.0f} s, report in {where})")


if __name__ == "__main__":
    main()
