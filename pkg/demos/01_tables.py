#!/usr/bin/env python
# Build the gender x age x region tables from the bundled case-level fixture.
#
# The fixture is laid out like the CDC daily export: one row per
# (diagnosis date, county, gender, age band, imported flag) with a count.
# We keep local cases diagnosed between 2020-01-22 and 2021-06-11.
from loglinear import margin
from loglinear.ingest import A7, B12, aggregate, filter_cases, fixture_path, parse_csv

with open(fixture_path(), encoding="utf-8") as fh:
    records = parse_csv(fh, strict=True)
print(len(records), "rows in the fixture")

cohort = filter_cases(records, "2020-01-22", "2021-06-11", exclude_imported=True)
print(sum(r.count for r in cohort), "local cases in the window")

# seven regions
t7 = aggregate(cohort, A7)
print(t7.shape, t7.names)
for gender in t7.factor("性別").levels:
    for age in t7.factor("年齡").levels:
        row = [t7[gender, age, region] for region in A7.levels]
        print(f"{gender} {age:>6}", row)

# the twelve-region split breaks 北北基 and 桃竹苗 into their counties
t12 = aggregate(cohort, B12)
m = margin(t12, ["縣市"])
for (county,), n in m.cells():
    print(f"{county}\t{n}")

# tables serialize to CSV/JSON and read back unchanged
assert type(t7).from_json(t7.to_json()) == t7
