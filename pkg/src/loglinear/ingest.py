"""
Surveillance case records: CSV parsing, filtering, and aggregation into a
gender x age x region contingency table.

Default column names follow the Taiwan CDC open-data export
``Day_Confirmation_Age_County_Gender_19CoV.csv``; they can be overridden
with a column config (JSON or ``key=value`` lines).
"""

import csv
import datetime as dt
import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .contingency import ContingencyTable, Factor, build_table

logger = logging.getLogger(__name__)

__all__ = [
    "CaseRecord",
    "ParseIssue",
    "CSVParseError",
    "RegionScheme",
    "AgeScheme",
    "DEFAULT_COLUMNS",
    "GENDER",
    "AGE",
    "REGION",
    "A7",
    "B12",
    "DEFAULT_AGE_SCHEME",
    "region_scheme",
    "split_counties",
    "parse_date",
    "load_column_config",
    "parse_csv",
    "read_csv",
    "write_csv",
    "filter_cases",
    "aggregate",
    "fixture_path",
    "load_fixture",
]

GENDER = "性別"
AGE = "年齡"
REGION = "縣市"
GENDER_LEVELS = ("男性", "女性")
AGE_GROUPS = ("0-29", "30-59", "60+")

DEFAULT_COLUMNS = {
    "date": "個案研判日",
    "county": "縣市",
    "gender": "性別",
    "age_band": "年齡層",
    "imported": "是否為境外移入",
    "count": "確定病例數",
}

STUDY_START = dt.date(2020, 1, 22)
STUDY_END = dt.date(2021, 6, 11)
DEFAULT_BASELINES = {GENDER: "男性", AGE: "0-29", REGION: "宜花東"}


@dataclass(frozen=True)
class CaseRecord:
    diagnosis_date: dt.date
    county: str
    gender: str
    age_band: str
    imported: bool
    count: int
    line: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be nonnegative")


class ParseIssue(NamedTuple):
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


class CSVParseError(ValueError):
    """Raised in strict mode when any data row failed to parse."""

    def __init__(self, issues):
        self.issues = list(issues)
        head = "; ".join(str(i) for i in self.issues[:5])
        more = f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        super().__init__(f"{len(self.issues)} malformed row(s): {head}{more}")


# -- grouping schemes -----------------------------------------------------

_A7_GROUPS = {
    "北北基": ("台北市", "新北市", "基隆市"),
    "桃竹苗": ("桃園市", "新竹縣", "新竹市", "苗栗縣"),
    "中彰投": ("台中市", "彰化縣", "南投縣"),
    "雲嘉南": ("雲林縣", "嘉義市", "嘉義縣", "台南市"),
    "高屏": ("高雄市", "屏東縣"),
    "宜花東": ("宜蘭縣", "花蓮縣", "台東縣"),
    "離島": ("澎湖縣", "金門縣", "連江縣"),
}
_SPLIT_IN_B12 = ("北北基", "桃竹苗")


def _normalize_county(label):
    return label.strip().replace("臺", "台")


@dataclass(frozen=True)
class RegionScheme:
    """County -> region grouping with an explicit region order."""

    name: str
    mapping: dict
    levels: tuple = ()

    def __post_init__(self):
        mapping = {_normalize_county(k): v for k, v in self.mapping.items()}
        object.__setattr__(self, "mapping", mapping)
        if not self.levels:
            object.__setattr__(self, "levels", tuple(dict.fromkeys(mapping.values())))
        stray = set(mapping.values()) - set(self.levels)
        if stray:
            raise ValueError(f"regions missing from level order: {sorted(stray)}")

    def region(self, county):
        try:
            return self.mapping[_normalize_county(county)]
        except KeyError:
            raise ValueError(f"county {county!r} is not mapped by scheme {self.name}") from None

    def factor(self):
        return Factor(REGION, self.levels)


def _build_a7():
    mapping = {c: g for g, cs in _A7_GROUPS.items() for c in cs}
    return RegionScheme("A7", mapping, tuple(_A7_GROUPS))


def _build_b12():
    mapping, levels = {}, []
    for group, counties in _A7_GROUPS.items():
        if group in _SPLIT_IN_B12:
            for c in counties:
                mapping[c] = c
                levels.append(c)
        else:
            for c in counties:
                mapping[c] = group
            levels.append(group)
    return RegionScheme("B12", mapping, tuple(levels))


A7 = _build_a7()
B12 = _build_b12()


def split_counties():
    """Counties kept separate in B12 that A7 merges into 北北基 and 桃竹苗."""
    return [c for g in _SPLIT_IN_B12 for c in _A7_GROUPS[g]]


def region_scheme(name, overrides=None):
    """Look up ``"A7"`` or ``"B12"``, optionally replacing county memberships."""
    base = {"A7": A7, "B12": B12}.get(str(name).upper())
    if base is None:
        raise ValueError(f"unknown region scheme {name!r}; expected A7 or B12")
    if not overrides:
        return base
    mapping = dict(base.mapping)
    mapping.update({_normalize_county(k): v for k, v in overrides.items()})
    return RegionScheme(base.name, mapping, base.levels)


_BAND = re.compile(r"^\s*(\d+)\s*(?:(?:-|~|–)\s*(\d+)|(\+))?\s*(?:歲)?\s*$")


def _age_group(band):
    m = _BAND.match(band)
    if not m:
        return None
    lower = int(m.group(1))
    upper = int(m.group(2)) if m.group(2) else (None if m.group(3) else lower)
    if upper is not None and upper <= 29:
        return "0-29"
    if upper is not None and lower >= 30 and upper <= 59:
        return "30-59"
    if lower >= 60:
        return "60+"
    return None


@dataclass(frozen=True)
class AgeScheme:
    """Source age band -> one of 0-29, 30-59, 60+.

    Bands not listed in ``mapping`` are grouped from their numeric bounds
    ("0", "5-9", "70+") unless ``strict`` is set.  Bands straddling a
    group boundary (e.g. "25-34") are never grouped implicitly.
    """

    mapping: dict = field(default_factory=dict)
    strict: bool = False
    groups: tuple = AGE_GROUPS

    def __post_init__(self):
        bad = set(self.mapping.values()) - set(self.groups)
        if bad:
            raise ValueError(f"age mapping targets unknown groups: {sorted(bad)}")

    def group(self, band):
        band = band.strip()
        if band in self.mapping:
            return self.mapping[band]
        group = None if self.strict else _age_group(band)
        if group is None:
            raise ValueError(f"age band {band!r} is not mapped")
        return group

    def factor(self):
        return Factor(AGE, self.groups)


DEFAULT_AGE_SCHEME = AgeScheme()


# -- parsing ------------------------------------------------------------

def load_column_config(path):
    """Read a column-name config: a JSON object or ``key=value`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad config line {raw!r}")
            data[key.strip()] = value.strip()
    unknown = set(data) - set(DEFAULT_COLUMNS)
    if unknown:
        raise ValueError(f"unknown column keys: {sorted(unknown)}")
    return {**DEFAULT_COLUMNS, **data}


_TRUE = {"是", "true", "1", "yes", "y", "t"}
_FALSE = {"否", "false", "0", "no", "n", "f", ""}
_GENDERS = {"男": "男性", "男性": "男性", "女": "女性", "女性": "女性"}


def parse_date(text):
    """ISO ``2021-06-11``, CDC-style ``2021/06/11`` or ``20210611``."""
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%Y/%m/%d", "%Y%m%d"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unparseable date {text!r}")


def _parse_bool(text):
    key = text.strip().lower()
    if key in _TRUE:
        return True
    if key in _FALSE:
        return False
    raise ValueError(f"unparseable imported flag {text!r}")


def _parse_gender(text):
    try:
        return _GENDERS[text.strip()]
    except KeyError:
        raise ValueError(f"unknown gender label {text!r}") from None


def _parse_count(text):
    text = text.strip()
    if not re.fullmatch(r"\d+", text):
        raise ValueError(f"unparseable count {text!r}")
    return int(text)


def read_csv(stream, column_config=None):
    """Parse case records, collecting malformed rows instead of failing.

    Returns
    -------
    records : list of CaseRecord
    issues : list of ParseIssue
        One entry per rejected data row, with its 1-based line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    columns = {**DEFAULT_COLUMNS, **(column_config or {})}
    reader = csv.reader(stream)
    try:
        header = [h.strip().lstrip("﻿") for h in next(reader)]
    except StopIteration:
        raise ValueError("CSV has no header row") from None
    missing = [c for c in columns.values() if c not in header]
    if missing:
        raise ValueError(f"missing column(s): {missing}")
    pos = {key: header.index(name) for key, name in columns.items()}

    records, issues = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            issues.append(ParseIssue(lineno, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            records.append(
                CaseRecord(
                    diagnosis_date=parse_date(row[pos["date"]]),
                    county=_normalize_county(row[pos["county"]]),
                    gender=_parse_gender(row[pos["gender"]]),
                    age_band=row[pos["age_band"]].strip(),
                    imported=_parse_bool(row[pos["imported"]]),
                    count=_parse_count(row[pos["count"]]),
                    line=lineno,
                )
            )
        except ValueError as exc:
            issues.append(ParseIssue(lineno, str(exc)))
    return records, issues


def parse_csv(stream, column_config=None, strict=False):
    """Parse case records from CSV text or a text stream.

    Malformed rows are logged with their line numbers and skipped; with
    ``strict=True`` a :class:`CSVParseError` listing all of them is raised
    instead.
    """
    records, issues = read_csv(stream, column_config)
    if issues:
        if strict:
            raise CSVParseError(issues)
        for issue in issues:
            logger.warning("skipping malformed row, %s", issue)
    return records


def write_csv(records, stream=None, column_config=None):
    """Serialize records in the same layout :func:`parse_csv` reads."""
    columns = {**DEFAULT_COLUMNS, **(column_config or {})}
    out = stream if stream is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    keys = list(DEFAULT_COLUMNS)
    writer.writerow([columns[k] for k in keys])
    for r in records:
        values = {
            "date": r.diagnosis_date.isoformat(),
            "county": r.county,
            "gender": r.gender,
            "age_band": r.age_band,
            "imported": "是" if r.imported else "否",
            "count": str(r.count),
        }
        writer.writerow([values[k] for k in keys])
    return out.getvalue() if stream is None else None


def filter_cases(records, date_from=STUDY_START, date_to=STUDY_END, exclude_imported=True):
    """Keep records dated within ``[date_from, date_to]``, dropping imported
    cases when ``exclude_imported`` is set."""
    if isinstance(date_from, str):
        date_from = parse_date(date_from)
    if isinstance(date_to, str):
        date_to = parse_date(date_to)
    if date_from > date_to:
        raise ValueError("date_from must not be after date_to")
    return [
        r
        for r in records
        if date_from <= r.diagnosis_date <= date_to
        and not (exclude_imported and r.imported)
    ]


def aggregate(records: Iterable[CaseRecord], region_scheme=A7, age_scheme=DEFAULT_AGE_SCHEME) -> ContingencyTable:
    """Sum record counts into a 性別 x 年齡 x 縣市 table.

    Raises
    ------
    ValueError
        Listing every county or age band the schemes do not map.
    """
    sums = {}
    unmapped = set()
    for r in records:
        try:
            key = (r.gender, age_scheme.group(r.age_band), region_scheme.region(r.county))
        except ValueError as exc:
            where = f"line {r.line}: " if r.line else ""
            unmapped.add(f"{where}{exc}")
            continue
        sums[key] = sums.get(key, 0) + r.count
    if unmapped:
        raise ValueError("; ".join(sorted(unmapped, key=_line_key)))
    factors = [Factor(GENDER, GENDER_LEVELS), age_scheme.factor(), region_scheme.factor()]
    return build_table(factors, sums.items())


def _line_key(message):
    m = re.match(r"line (\d+):", message)
    return (int(m.group(1)) if m else 0, message)


def fixture_path():
    """Path of the bundled record-level fixture (CDC export layout)."""
    return Path(__file__).with_name("data") / "cdc_cases_fixture.csv"


def load_fixture(scheme="A7"):
    """Aggregate the bundled fixture over the study window, local cases only."""
    with open(fixture_path(), encoding="utf-8") as fh:
        records = parse_csv(fh, strict=True)
    cohort = filter_cases(records, STUDY_START, STUDY_END, exclude_imported=True)
    return aggregate(cohort, region_scheme(scheme))
