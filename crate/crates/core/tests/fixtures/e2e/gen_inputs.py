"""Writes the synthetic balance-sheet fixture used by the end-to-end tests.

Six countries, eight commodities plus a sweetener and an excluded item,
old series 2008-2011 in the wide export layout, new series 2010-2012 in
the long layout. Also writes population rows, a non-energy element, a
FAOSTAT rollup area and item total, a region scheme, modelling units,
scenario deltas and the pipeline config. Deterministic; rerun to refresh.
"""

import csv

COUNTRIES = [
    (2, "Afghanistan", "Southern Asia"),
    (21, "Brazil", "South America"),
    (59, "Egypt", "Northern Africa"),
    (68, "France", "Western Europe"),
    (114, "Kenya", "Eastern Africa"),
    (231, "United States of America", "Northern America"),
]

# code_old, code_new, name, base kcal
ITEMS = [
    (2511, 2511, "Wheat and products", 700),
    (2805, 2807, "Rice", 300),
    (2615, 2615, "Bananas", 60),
    (2601, 2601, "Tomatoes and products", 40),
    (2731, 2731, "Bovine Meat", 120),
    (2546, 2546, "Beans", 90),
    (2571, 2571, "Soyabean Oil", 150),
    (2542, 2542, "Sugar (Raw Equivalent)", 200),
    (2656, 2656, "Beer", 50),
]

OLD_YEARS = [2008, 2009, 2010, 2011]
NEW_YEARS = [2010, 2011, 2012]
POP_BASE = {2: 27000, 21: 190000, 59: 80000, 68: 62000, 114: 41000, 231: 305000}


def kcal(country, item_idx, year, series):
    """Integer kcal/capita/day; the two series differ in overlap years."""
    base = ITEMS[item_idx][3]
    scale = 0.5 + ((country * 7 + item_idx * 13) % 17) / 10.0
    trend = 1.0 + 0.02 * (year - 2008) * (1 if (country + item_idx) % 3 else -1)
    shift = 1.07 if series == "new" else 1.0
    return int(round(base * scale * trend * shift))


def population(country, year, series):
    """Thousands of persons."""
    growth = 1.0 + 0.015 * (year - 2008)
    shift = 1.01 if series == "new" else 1.0
    return int(round(POP_BASE[country] * growth * shift))


def write_old():
    years = OLD_YEARS
    header = ["Area Code", "Area", "Item Code", "Item", "Element Code", "Element", "Unit"]
    header += [f"Y{y}" for y in years] + [f"Y{y}F" for y in years]
    rows = []
    for code, name, _ in COUNTRIES:
        rows.append([code, name, 2501, "Population", 511, "Total Population - Both sexes", "1000 persons"]
                    + [population(code, y, "old") for y in years] + [""] * len(years))
        for idx, (old_code, _, item, _) in enumerate(ITEMS):
            vals = [kcal(code, idx, y, "old") for y in years]
            if code == 68 and old_code == 2601:
                vals[3] = "n.a."
            if code == 2 and old_code == 2656:
                vals[0] = ""
            rows.append([code, name, old_code, item, 664, "Food supply (kcal/capita/day)", "kcal/capita/day"]
                        + vals + ["Fc"] * len(years))
            rows.append([code, name, old_code, item, 645, "Food supply quantity (kg/capita/yr)", "kg"]
                        + [round(v / 10.0, 1) for v in [kcal(code, idx, y, "old") for y in years]]
                        + [""] * len(years))
        rows.append([code, name, 2901, "Grand Total", 664, "Food supply (kcal/capita/day)", "kcal/capita/day"]
                    + [9999] * len(years) + [""] * len(years))
    rows.append([5000, "World", 2511, "Wheat and products", 664, "Food supply (kcal/capita/day)",
                 "kcal/capita/day"] + [500] * len(years) + [""] * len(years))
    with open("fbsh_wide.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_new():
    header = ["Area Code", "Area Code (M49)", "Area", "Item Code", "Item Code (FBS)", "Item",
              "Element Code", "Element", "Year Code", "Year", "Unit", "Value", "Flag"]
    rows = []
    for code, name, _ in COUNTRIES:
        for y in NEW_YEARS:
            rows.append([code, f"'{code:03d}", name, 2501, "'S2501", "Population", 511,
                         "Total Population - Both sexes", y, y, "1000 persons", population(code, y, "new"), "X"])
        for idx, (_, new_code, item, _) in enumerate(ITEMS):
            for y in NEW_YEARS:
                rows.append([code, f"'{code:03d}", name, new_code, f"'F{new_code}", item, 664,
                             "Food supply (kcal/capita/day)", y, y, "kcal/capita/day",
                             kcal(code, idx, y, "new"), "E"])
                rows.append([code, f"'{code:03d}", name, new_code, f"'F{new_code}", item, 5142,
                             "Food", y, y, "1000 t", kcal(code, idx, y, "new") * 3, "E"])
    for y in NEW_YEARS:
        rows.append([5000, "'001", "World", 2511, "'F2511", "Wheat and products", 664,
                     "Food supply (kcal/capita/day)", y, y, "kcal/capita/day", 520, "E"])
    with open("fbs_long.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_tables():
    with open("region_scheme.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["country_id", "country", "subregion"])
        for code, name, sub in COUNTRIES:
            w.writerow([code, name, sub])

    units = [
        ("Brazil", 21, 0), ("Egypt", 59, 0), ("France Plus", 68, 0), ("Kenya", 114, 0),
        ("United States", 231, 0),
        # Afghanistan shares a unit with a territory that has no balance sheet.
        ("Afghanistan Plus", 2, 0), ("Afghanistan Plus", 888, 0),
        ("Remote Islands", 777, 1), ("Remote Islands", 778, 1),
    ]
    with open("units.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["unit_id", "member_country_id", "excluded_flag"])
        w.writerows(units)

    groups = ["asf", "fruits", "lns", "oils_fats", "starchy_staples", "sugars", "vegetables"]
    kept = ["Brazil", "Egypt", "France Plus", "Kenya", "United States", "Afghanistan Plus"]
    with open("deltas.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "unit", "group", "year", "multiplier"])
        for s_idx, scenario in enumerate(["Reference", "CompInvest"]):
            for u_idx, unit in enumerate(kept):
                for g_idx, group in enumerate(groups):
                    for year in [2010, 2020, 2030, 2040, 2050]:
                        if year == 2010:
                            m = 1.0
                        else:
                            rate = ((u_idx * 5 + g_idx * 3) % 11 - 3) / 100.0 + 0.01 * s_idx
                            m = round(1.0 + rate * (year - 2010) / 10.0, 4)
                        w.writerow([scenario, unit, group, year, m])

    with open("config.toml", "w") as f:
        f.write("""[inputs]
fbsh = "fbsh_wide.csv"
fbs = "fbs_long.csv"
commodity_map = "builtin"
region_scheme = "region_scheme.csv"
impact_units = "units.csv"
scenario_deltas = "deltas.csv"

[splice]
splice_year = 2010

[stages]
projections = true

[output]
dir = "out"
""")


if __name__ == "__main__":
    write_old()
    write_new()
    write_tables()
