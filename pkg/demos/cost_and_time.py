"""What would a full labelling run cost, and how long would it take?

Calibrates a price table on half of the recorded mock log (25-example,
2-D, two-class prompts) so that 2330 such queries cost USD 5.03, then
checks the estimate on the other half and prints the rate-capped duration
at 175 requests per minute.

    python3 demos/cost_and_time.py
"""
from pathlib import Path

from senselabel.evaluation import calibrate_price_table, cost_estimate, time_estimate, token_totals
from senselabel.llm import read_log

LOG = Path(__file__).resolve().parents[1] / "tests/fixtures/two_class_mock_log.jsonl"


def main():
    records = list(read_log(LOG).values())
    fit, held_out = records[0::2], records[1::2]
    prices = calibrate_price_table(fit, 5.03, 2330)
    pt, ct, n = token_totals(held_out)
    print(f"{n} held-out queries: {pt / n:.0f} prompt and {ct / n:.1f} completion tokens each")
    print(f"calibrated prices: {prices.prompt_per_1k / 1e6:.6f} / {prices.completion_per_1k / 1e6:.6f} "
          f"USD per 1k prompt / completion tokens")
    per_query = cost_estimate(held_out, prices).amount / n
    print(f"estimated cost of 2330 queries: USD {per_query * 2330:.2f}")
    print(f"duration at 175 requests/min: {time_estimate(2330, 175):.2f} min")


if __name__ == "__main__":
    main()
