"""Regenerate tests/fixtures/two_class_mock_log.jsonl.

Runs the two-class demo study through the mock chat backend at dim 2,
euclidean distance and 25 examples per class, then copies the annotation
log (prompts, replies and token counts) into the test fixtures. The cost
acceptance test calibrates a price table on half of this log and checks
the estimate on the other half.

    python3 demos/record_fixture_log.py [--out /tmp/fixture-run]
"""
import argparse
import shutil
from pathlib import Path

from senselabel.pipeline import Pipeline, RunConfig

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="/tmp/fixture-run")
    args = parser.parse_args()
    config = RunConfig.load(ROOT / "demos/configs/two_class.toml",
                            [(["out"], str(Path(args.out).resolve())), (["annotate", "backend"], "mock"),
                             (["project", "dim"], 2), (["annotate", "metric"], "euclidean"),
                             (["annotate", "examples"], 25)])
    result = Pipeline(config).annotate()
    dest = ROOT / "tests/fixtures/two_class_mock_log.jsonl"
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(result.path("annotations.jsonl"), dest)
    print(f"wrote {dest}")


if __name__ == "__main__":
    main()
