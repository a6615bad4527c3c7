#!/usr/bin/env python
# Grouped bar charts of the case counts, written as plain SVG files.
import sys
from pathlib import Path

from loglinear.ingest import load_fixture, split_counties
from loglinear.report import table_charts

out = Path(sys.argv[1] if len(sys.argv) > 1 else "charts")
out.mkdir(parents=True, exist_ok=True)

t7 = load_fixture("A7")
t12 = load_fixture("B12")
sets = {
    "A7": table_charts(t7),
    "B12": table_charts(t12),
    # only the counties that the twelve-region scheme splits out
    "B12_split": table_charts(t12, levels=list(split_counties())),
}
for prefix, charts in sets.items():
    for stem, svg in charts.items():
        path = out / f"{prefix}_{stem}.svg"
        path.write_text(svg, encoding="utf-8")
        print("wrote", path)
