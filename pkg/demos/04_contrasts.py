#!/usr/bin/env python
# Within a region, is the 60+ age effect different from the 30-59 one?
# Under 0-29 baselines this is the difference of two interaction
# coefficients.  Re-baselining age to 30-59 and refitting gives the same
# number as a single Wald test.
from loglinear import Baselines, ModelSpec, build_design, fit, level_contrast, rebase, wald_tests
from loglinear.ingest import DEFAULT_BASELINES, load_fixture

spec = ModelSpec.parse("年齡+性別+縣市+年齡*性別+年齡*縣市+性別*縣市")

for scheme, regions in (("A7", ["北北基", "桃竹苗"]), ("B12", ["台北市", "新北市", "苗栗縣"])):
    table = load_fixture(scheme)
    base = Baselines.for_table(table, DEFAULT_BASELINES)
    result = fit(table, build_design(table, spec, base))
    refit = fit(table, build_design(table, spec, rebase(spec, base, "年齡", "30-59")))
    tests = {t.label: t for t in wald_tests(refit)}
    for region in regions:
        c = level_contrast(result, "年齡", "60+", "30-59", within=("縣市", region))
        t = tests[f"年齡*縣市 60+ {region}"]
        print(f"{scheme} {region}: contrast {c.estimate:+.4f} (p={c.p_value:.4f});"
              f" refit {t.estimate:+.4f} (p={t.p_value:.4f})")
