"""Group-level projection inputs reverse-engineered from published ratios.

The per-commodity scenario deltas behind the published regional projections
are not available. This script recovers one pseudo-unit per published area:
its base-year kcal is the published base-year ratio times the group target,
and each multiplier is the published ratio divided by the base-year ratio.
Feeding these through the projection engine must reproduce the published
ratios, which exercises the engine end to end without the original inputs.
"""

import csv
import os

HERE = os.path.dirname(os.path.abspath(__file__))
SOURCE = os.path.join(HERE, "..", "published", "projection_ratios.csv")
GROUPS = ["asf", "fruits", "lns", "oils_fats", "starchy_staples", "sugars", "vegetables"]
TARGETS = {"asf": 300.0, "fruits": 160.0, "lns": 300.0, "oils_fats": 300.0,
           "starchy_staples": 1160.0, "sugars": 233.0, "vegetables": 110.0}
SCENARIO_ID = {"Reference Scenario": "Reference", "Comp. Investments": "CompInvest"}


def main():
    with open(SOURCE, newline="") as f:
        rows = list(csv.DictReader(f))
    base = {}
    for r in rows:
        if r["year"] == "2010" and r["scenario"] == "Reference Scenario":
            base[r["region"]] = {g: float(r[g]) for g in GROUPS}

    with open(os.path.join(HERE, "reverse_engineered_base.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["unit", "group", "kcal"])
        for unit in sorted(base):
            for g in GROUPS:
                w.writerow([unit, g, repr(base[unit][g] * TARGETS[g])])

    with open(os.path.join(HERE, "reverse_engineered_deltas.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "unit", "group", "year", "multiplier"])
        for r in sorted(rows, key=lambda r: (SCENARIO_ID[r["scenario"]], r["region"], int(r["year"]))):
            if r["year"] == "2010":
                continue
            for g in GROUPS:
                m = float(r[g]) / base[r["region"]][g]
                w.writerow([SCENARIO_ID[r["scenario"]], r["region"], g, r["year"], repr(m)])


if __name__ == "__main__":
    main()
