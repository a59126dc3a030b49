"""Load survey extracts (CSV) into validated, segmented observations."""
from __future__ import annotations

import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import yaml

from .core import DEFAULT_AGE_BANDS, Observations, SegmentKey

__all__ = [
    "IngestionError",
    "Filters",
    "DatasetManifest",
    "DropReport",
    "load_manifest",
    "load_dataset",
    "load_grouped_csv",
    "segmentize",
    "age_band_label",
]

REQUIRED_COLUMNS = ("wage", "tenure")
OPTIONAL_COLUMNS = ("censored", "weight", "sector", "education", "age", "age_band", "region",
                    "gender", "year", "hours", "status")
# checked in this order; a row is charged to the first reason it fails
DROP_REASONS = ("invalid_wage", "invalid_tenure", "invalid_weight", "invalid_censor_flag",
                "age_filter", "hours_filter", "status_filter", "exclusion_filter",
                "missing_segment", "unknown_category")
_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class Filters:
    """Row filters; a filter whose column is not mapped is skipped."""

    age_min: Optional[float] = 15
    age_max: Optional[float] = 64
    min_hours: Optional[float] = 35
    status_keep: Optional[tuple] = None
    exclude: tuple = ()

    def __post_init__(self):
        if self.age_min is not None and self.age_max is not None and self.age_min > self.age_max:
            raise IngestionError("age_min exceeds age_max")
        if self.min_hours is not None and self.min_hours < 0:
            raise IngestionError("min_hours must be non-negative")
        if self.status_keep is not None:
            object.__setattr__(self, "status_keep", tuple(str(s) for s in self.status_keep))
        ex = []
        for rule in self.exclude:
            if not isinstance(rule, dict) or "column" not in rule or "values" not in rule:
                raise IngestionError("exclude rules need 'column' and 'values'")
            ex.append({"column": rule["column"], "values": [str(v) for v in rule["values"]]})
        object.__setattr__(self, "exclude", tuple(ex))


@dataclass(frozen=True)
class DatasetManifest:
    source_path: str
    column_map: dict
    filters: Filters = field(default_factory=Filters)
    year: int = 0
    schema: Optional[dict] = None
    age_bands: tuple = DEFAULT_AGE_BANDS
    censor_level: Optional[float] = None

    def __post_init__(self):
        missing = [c for c in REQUIRED_COLUMNS if c not in self.column_map]
        if missing:
            raise IngestionError(f"column_map lacks required entries: {missing}")
        unknown = set(self.column_map) - set(REQUIRED_COLUMNS) - set(OPTIONAL_COLUMNS)
        if unknown:
            raise IngestionError(f"unknown column_map entries: {sorted(unknown)}")
        bands = tuple((float(lo), float(hi)) for lo, hi in self.age_bands)
        if any(lo > hi for lo, hi in bands):
            raise IngestionError("age band with lower bound above upper bound")
        object.__setattr__(self, "age_bands", bands)
        if self.censor_level is not None and not self.censor_level > 0:
            raise IngestionError("censor_level must be positive")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        src = d.pop("source_path")
        if base_dir and not os.path.isabs(src):
            src = os.path.join(base_dir, src)
        filters = Filters(**(d.pop("filters", None) or {}))
        cols = d.pop("columns", None) or d.pop("column_map")
        return cls(source_path=src, column_map=dict(cols), filters=filters, **d)

    def to_dict(self):
        return {"source_path": self.source_path, "columns": dict(self.column_map),
                "filters": {"age_min": self.filters.age_min, "age_max": self.filters.age_max,
                            "min_hours": self.filters.min_hours,
                            "status_keep": list(self.filters.status_keep)
                            if self.filters.status_keep is not None else None,
                            "exclude": list(self.filters.exclude)},
                "year": self.year, "schema": self.schema,
                "age_bands": [list(b) for b in self.age_bands],
                "censor_level": self.censor_level}


@dataclass
class DropReport:
    rows_in: int
    rows_out: int
    dropped: dict

    def to_dict(self):
        return {"rows_in": self.rows_in, "rows_out": self.rows_out,
                "dropped": dict(sorted(self.dropped.items()))}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_manifest(path):
    """Read a YAML or JSON manifest; relative ``source_path`` resolves against its folder."""
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise IngestionError(f"manifest {path} is not a mapping")
    return DatasetManifest.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))


def age_band_label(lo, hi):
    return f"{lo:g}-{hi:g}"


def _read_csv(path):
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc


def _num(series):
    return pd.to_numeric(series.str.strip(), errors="coerce").to_numpy(float)


def _flag(series):
    s = series.str.strip().str.lower()
    out = np.full(len(s), np.nan)
    out[s.isin(_TRUE).to_numpy()] = 1.0
    out[s.isin(_FALSE).to_numpy()] = 0.0
    return out


def load_dataset(manifest, *, return_report=False):
    """Validated observations from the manifest's CSV file.

    Rows are never imputed: a row failing any check is dropped and charged
    to the first failing reason. When the file has no censoring column every
    spell is marked censored; ``manifest.censor_level`` then re-marks spells
    at or below it as complete.

    Raises
    ------
    IngestionError
        If the file is unreadable, a mapped column is missing, or no row
        survives.
    """
    if isinstance(manifest, (str, os.PathLike)):
        manifest = load_manifest(manifest)
    df = _read_csv(manifest.source_path)
    cmap = manifest.column_map
    absent = [f"{k}->{v}" for k, v in cmap.items() if v not in df.columns]
    for rule in manifest.filters.exclude:
        if rule["column"] not in df.columns:
            absent.append(f"exclude->{rule['column']}")
    if absent:
        raise IngestionError(f"mapped columns missing from {manifest.source_path}: {absent}")
    n = len(df)
    reason = np.full(n, "", dtype=object)

    def charge(mask, name):
        m = mask & (reason == "")
        reason[m] = name

    wage = _num(df[cmap["wage"]])
    charge(~(wage > 0), "invalid_wage")
    tenure = _num(df[cmap["tenure"]])
    charge(~(tenure >= 0), "invalid_tenure")
    if "weight" in cmap:
        weight = _num(df[cmap["weight"]])
        charge(~(weight > 0), "invalid_weight")
    else:
        weight = np.ones(n)
    if "censored" in cmap:
        cflag = _flag(df[cmap["censored"]])
        charge(np.isnan(cflag), "invalid_censor_flag")
    else:
        cflag = np.ones(n)
    f = manifest.filters
    age = _num(df[cmap["age"]]) if "age" in cmap else None
    if age is not None and (f.age_min is not None or f.age_max is not None):
        lo = -np.inf if f.age_min is None else f.age_min
        hi = np.inf if f.age_max is None else f.age_max
        charge(~((age >= lo) & (age <= hi)), "age_filter")
    if "hours" in cmap and f.min_hours is not None:
        hours = _num(df[cmap["hours"]])
        charge(~(hours >= f.min_hours), "hours_filter")
    if "status" in cmap and f.status_keep is not None:
        charge(~df[cmap["status"]].str.strip().isin(f.status_keep).to_numpy(), "status_filter")
    for rule in f.exclude:
        charge(df[rule["column"]].str.strip().isin(rule["values"]).to_numpy(), "exclusion_filter")

    dims = {}
    for dim in ("sector", "education", "region", "gender"):
        if dim in cmap:
            dims[dim] = df[cmap[dim]].str.strip().to_numpy(object)
    if "age_band" in cmap:
        dims["age_band"] = df[cmap["age_band"]].str.strip().to_numpy(object)
    elif age is not None:
        band = np.full(n, "", dtype=object)
        for lo, hi in manifest.age_bands:
            band[(age >= lo) & (age <= hi) & (band == "")] = age_band_label(lo, hi)
        dims["age_band"] = band
    if "year" in cmap:
        yr = _num(df[cmap["year"]])
        charge(~np.isfinite(yr), "missing_segment")
        year = np.where(np.isfinite(yr), yr, manifest.year).astype(int)
    else:
        year = np.full(n, int(manifest.year))
    for dim in ("sector", "education", "age_band"):
        if dim in dims:
            charge(dims[dim] == "", "missing_segment")
    if manifest.schema:
        for dim, allowed in manifest.schema.items():
            if dim in dims:
                ok = np.isin(dims[dim], [str(a) for a in allowed]) | (dims[dim] == "")
                charge(~ok, "unknown_category")

    keep = reason == ""
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        counts = Counter(reason.tolist())
        raise IngestionError(f"no rows survive validation and filters: {dict(counts)}")
    censored = cflag[idx] == 1.0
    if manifest.censor_level is not None:
        censored = censored & ~(tenure[idx] <= manifest.censor_level)
    keys = []
    cache = {}
    for i in idx:
        parts = (dims["sector"][i] if "sector" in dims else "all",
                 dims["education"][i] if "education" in dims else "all",
                 dims["age_band"][i] if "age_band" in dims else "all",
                 (dims["region"][i] or None) if "region" in dims else None,
                 (dims["gender"][i] or None) if "gender" in dims else None,
                 int(year[i]))
        key = cache.get(parts)
        if key is None:
            key = cache[parts] = SegmentKey(*parts)
        keys.append(key)
    obs = Observations(wage[idx], tenure[idx], censored, weight[idx], keys)
    if not return_report:
        return obs
    dropped = Counter(r for r in reason.tolist() if r)
    return obs, DropReport(n, int(idx.size), dict(dropped))


def load_grouped_csv(path):
    """Two-column grouped data (``lower_bound``, ``frequency``)."""
    from .core import GroupedDurations
    df = _read_csv(path)
    for col in ("lower_bound", "frequency"):
        if col not in df.columns:
            raise IngestionError(f"grouped CSV {path} lacks column {col!r}")
    lb, fr = _num(df["lower_bound"]), _num(df["frequency"])
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(fr))):
        raise IngestionError(f"grouped CSV {path} has non-numeric entries")
    order = np.argsort(lb)
    try:
        return GroupedDurations(tuple(lb[order]), tuple(fr[order]))
    except ValueError as exc:
        raise IngestionError(str(exc)) from exc


def segmentize(observations, min_size=30):
    """Split observations by segment key, skipping segments smaller than ``min_size``.

    Returns
    -------
    segments : dict
        ``SegmentKey -> Observations``, ordered by key.
    skipped : list of dict
        ``{"segment": ..., "n": ...}`` for every key below the threshold.
    """
    groups = defaultdict(list)
    for i, key in enumerate(observations.keys):
        groups[key].append(i)
    segments = {}
    skipped = []
    for key in sorted(groups):
        idx = groups[key]
        if len(idx) >= min_size:
            segments[key] = observations.take(np.asarray(idx))
        else:
            skipped.append({"segment": key.as_dict(), "n": len(idx)})
    return segments, skipped
