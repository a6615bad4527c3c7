"""
Command-line front end.

    loglinear ingest   --scheme A7 --input cases.csv --out-dir out/
    loglinear select   --scheme B12
    loglinear fit      --model "年齡+性別+縣市+年齡*性別+年齡*縣市+性別*縣市"
    loglinear contrast --factor 年齡 --levels 60+ 30-59 --within 縣市=新北市 --scheme B12
    loglinear charts   --out-dir charts/
    loglinear report   --out-dir report/

Settings come from flags, then a JSON config (``--config`` or the
``LOGLINEAR_CONFIG`` environment variable), then built-in defaults.
Without ``--input`` or ``--table`` the bundled fixture is analysed.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import ingest
from .contingency import ContingencyTable
from .design import Baselines, ModelSpec, build_design
from .inference import level_contrast, select
from .irls import fit
from .report import format_estimate, format_p, render_coefficients, render_margins, table_charts

logger = logging.getLogger("loglinear")

CONFIG_ENV = "LOGLINEAR_CONFIG"
HOMOGENEOUS = "年齡+性別+縣市+年齡*性別+年齡*縣市+性別*縣市"


@dataclass
class RunConfig:
    input: list = field(default_factory=list)
    table: str = None
    date_from: str = ingest.STUDY_START.isoformat()
    date_to: str = ingest.STUDY_END.isoformat()
    scheme: str = "A7"
    exclude_imported: bool = True
    baselines: dict = field(default_factory=lambda: dict(ingest.DEFAULT_BASELINES))
    model: str = HOMOGENEOUS
    format: str = "markdown"
    out_dir: str = None
    charts: bool = True
    strict: bool = False
    columns: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    age_bands: dict = field(default_factory=dict)

    def validate(self):
        if self.scheme.upper() not in ("A7", "B12"):
            raise ValueError(f"unknown scheme {self.scheme!r}; expected A7 or B12")
        self.scheme = self.scheme.upper()
        if self.format not in ("markdown", "csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")
        if ingest.parse_date(self.date_from) > ingest.parse_date(self.date_to):
            raise ValueError("--from is after --to")
        return self


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} | {"from", "to"}


def _load_config_file(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
    if "from" in data:
        data["date_from"] = data.pop("from")
    if "to" in data:
        data["date_to"] = data.pop("to")
    if isinstance(data.get("input"), str):
        data["input"] = [data["input"]]
    return data


def _parse_baselines(items):
    out = {}
    for item in items or []:
        name, sep, level = item.partition("=")
        if not sep:
            raise ValueError(f"--baseline expects factor=level, got {item!r}")
        out[name.strip()] = level.strip()
    return out


def resolve_config(args) -> RunConfig:
    """Merge defaults < config file < command-line flags."""
    cfg = RunConfig()
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        for key, value in _load_config_file(path).items():
            if key == "baselines":
                cfg.baselines.update(value)
            else:
                setattr(cfg, key, value)
    flags = (
        "input", "table", "date_from", "date_to", "scheme", "exclude_imported",
        "model", "format", "out_dir", "strict", "charts",
    )
    for key in flags:
        value = getattr(args, key, None)
        if value is not None and value != []:
            setattr(cfg, key, value)
    if getattr(args, "columns", None):
        cfg.columns = ingest.load_column_config(args.columns)
    cfg.baselines.update(_parse_baselines(getattr(args, "baseline", None)))
    return cfg.validate()


def load_table(cfg: RunConfig) -> ContingencyTable:
    if cfg.table:
        text = Path(cfg.table).read_text(encoding="utf-8")
        if cfg.table.endswith(".json"):
            return ContingencyTable.from_json(text)
        return ContingencyTable.from_csv(text)
    paths = cfg.input or [str(ingest.fixture_path())]
    if not cfg.input:
        logger.info("no --input given; using the bundled fixture")
    records = []
    for path in paths:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            records += ingest.parse_csv(fh, cfg.columns, strict=cfg.strict)
    records = ingest.filter_cases(records, cfg.date_from, cfg.date_to, cfg.exclude_imported)
    scheme = ingest.region_scheme(cfg.scheme, cfg.regions)
    ages = ingest.AgeScheme(dict(cfg.age_bands)) if cfg.age_bands else ingest.DEFAULT_AGE_SCHEME
    table = ingest.aggregate(records, scheme, ages)
    if table.total == 0:
        logger.warning("the aggregated table is empty")
    return table


def _baselines(table, cfg):
    known = {k: v for k, v in cfg.baselines.items() if k in table.names}
    return Baselines.for_table(table, known)


def _emit(text, cfg, stem, out):
    ext = {"markdown": "md", "csv": "csv", "json": "json"}[cfg.format]
    if cfg.out_dir:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out_dir) / f"{stem}.{ext}").write_text(text, encoding="utf-8")
    out.write(text)


def cmd_ingest(cfg, args, out):
    table = load_table(cfg)
    if cfg.out_dir:
        d = Path(cfg.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"table_{cfg.scheme}.csv").write_text(table.to_csv(), encoding="utf-8")
        (d / f"table_{cfg.scheme}.json").write_text(table.to_json(), encoding="utf-8")
    if cfg.format == "json":
        out.write(table.to_json() + "\n")
    elif cfg.format == "csv":
        out.write(table.to_csv())
    out.write(render_margins(table))
    return 0


def cmd_select(cfg, args, out):
    table = load_table(cfg)
    report = select(table, baselines=_baselines(table, cfg))
    text = report.to_json() + "\n" if cfg.format == "json" else report.to_markdown()
    if cfg.format == "csv":
        lines = ["model,bic,deviance,df_resid"]
        lines += [f"{r.label},{r.bic!r},{r.deviance!r},{r.df_resid}" for r in report.rows]
        text = "\n".join(lines) + f"\nbest,{report.best},,\n"
    _emit(text, cfg, f"selection_{cfg.scheme}", out)
    return 0 if all(r.ok for r in report.rows) else 1


def _fit(cfg):
    table = load_table(cfg)
    spec = ModelSpec.parse(cfg.model)
    design = build_design(table, spec, _baselines(table, cfg))
    return table, fit(table, design)


def cmd_fit(cfg, args, out):
    _, result = _fit(cfg)
    text = render_coefficients(result, cfg.format)
    if cfg.format == "json":
        text += "\n"
    _emit(text, cfg, f"fit_{cfg.scheme}", out)
    if cfg.out_dir:
        (Path(cfg.out_dir) / f"fit_{cfg.scheme}_full.json").write_text(result.to_json(), encoding="utf-8")
    return 0


def cmd_contrast(cfg, args, out):
    _, result = _fit(cfg)
    within = None
    if args.within:
        name, sep, level = args.within.partition("=")
        if not sep:
            raise ValueError(f"--within expects factor=level, got {args.within!r}")
        within = (name, level)
    c = level_contrast(result, args.factor, args.levels[0], args.levels[1], within)
    if cfg.format == "json":
        text = json.dumps(
            {"contrast": c.label, "estimate": c.estimate, "std_error": c.std_error, "z": c.z, "p_value": c.p_value},
            ensure_ascii=False,
        ) + "\n"
    elif cfg.format == "csv":
        text = f"contrast,estimate,std_error,p_value\n{c.label},{c.estimate!r},{c.std_error!r},{c.p_value!r}\n"
    else:
        text = (
            f"{c.label}: estimate {format_estimate(c.estimate)}, "
            f"SE {format_estimate(c.std_error)}, p {format_p(c.p_value)}\n"
        )
    _emit(text, cfg, f"contrast_{cfg.scheme}", out)
    return 0


def _write_charts(table, cfg, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    sets = {cfg.scheme: table_charts(table)}
    if cfg.scheme == "B12":
        levels = table.factor(ingest.REGION).levels
        split = [c for c in ingest.split_counties() if c in levels]
        sets["B12_split"] = table_charts(table, levels=split)
    for prefix, charts in sets.items():
        for stem, svg in charts.items():
            path = directory / f"{prefix}_{stem}.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)
    return written


def cmd_charts(cfg, args, out):
    table = load_table(cfg)
    for path in _write_charts(table, cfg, cfg.out_dir or "charts"):
        out.write(f"wrote {path}\n")
    return 0


def cmd_report(cfg, args, out):
    status = cmd_select(cfg, args, out)
    status |= cmd_fit(cfg, args, out)
    if cfg.charts:
        status |= cmd_charts(cfg, args, out)
    return status


COMMANDS = {
    "ingest": cmd_ingest,
    "select": cmd_select,
    "fit": cmd_fit,
    "contrast": cmd_contrast,
    "charts": cmd_charts,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--input", action="append", help="case CSV file (repeatable)")
    common.add_argument("--table", help="previously emitted table (.csv or .json)")
    common.add_argument("--columns", help="column-name config (JSON or key=value lines)")
    common.add_argument("--scheme", help="region grouping: A7 or B12")
    common.add_argument("--from", dest="date_from", help="first diagnosis date (inclusive)")
    common.add_argument("--to", dest="date_to", help="last diagnosis date (inclusive)")
    common.add_argument(
        "--exclude-imported", dest="exclude_imported", action=argparse.BooleanOptionalAction, default=None
    )
    common.add_argument("--baseline", action="append", help="factor=level (repeatable)")
    common.add_argument("--model", help='model text, e.g. "年齡+性別+縣市+年齡*縣市"')
    common.add_argument("--format", choices=["markdown", "csv", "json"])
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--strict", action="store_true", default=None, help="fail on any malformed row")
    common.add_argument("--charts", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="loglinear", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "contrast":
            p.add_argument("--factor", required=True)
            p.add_argument("--levels", nargs=2, required=True, metavar=("LEVEL_A", "LEVEL_B"))
            p.add_argument("--within", help="other_factor=level selecting an interaction group")
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args, out)
    except (OSError, ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
