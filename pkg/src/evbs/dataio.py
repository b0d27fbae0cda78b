"""Data ingestion, descriptive statistics, autocorrelation, config parsing and
deterministic JSON serialization for the analysis pipeline."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .regression import RegressionData


class LoadError(ValueError):
    """Itemized ingestion failure; ``issues`` lists per-row problems."""

    def __init__(self, message: str, issues: Optional[List[str]] = None):
        self.issues = issues or []
        detail = "" if not self.issues else "\n  " + "\n  ".join(self.issues)
        super().__init__(message + detail)


@dataclass(frozen=True)
class Record:
    """One ingested row: raw response plus covariate values, date optional."""

    date: Optional[str]
    response: float
    covariates: Tuple[float, ...]


# physical plausibility band for surface pressure readings, millibar
PRESSURE_BAND = (800.0, 1100.0)


def ingest_csv(
    path,
    response_col: str = "gust_ms",
    covariate_cols: Sequence[str] = ("pressure_mb",),
    date_col: Optional[str] = "date",
    log_response: bool = True,
):
    """Read a headered CSV into regression data.

    Rows with missing or unparseable fields, nonpositive responses,
    out-of-band pressures or duplicated dates are rejected and reported with
    their line numbers; remaining rows form the design matrix (intercept
    first, then the covariates in the order given). The response enters the
    model on the log scale when ``log_response`` is set.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError("no data rows: file is empty") from None
        header = [h.strip() for h in header]
        needed = [response_col, *covariate_cols]
        missing = [c for c in needed if c not in header]
        if missing:
            raise LoadError(f"column mismatch: missing {missing} in header {header}")
        idx = {c: header.index(c) for c in needed}
        date_idx = header.index(date_col) if date_col and date_col in header else None

        issues: List[str] = []
        records: List[Record] = []
        seen_dates: Dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                issues.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                resp = float(row[idx[response_col]])
                covs = tuple(float(row[idx[c]]) for c in covariate_cols)
            except ValueError:
                issues.append(f"line {lineno}: unparseable numeric field")
                continue
            if not math.isfinite(resp) or not all(math.isfinite(c) for c in covs):
                issues.append(f"line {lineno}: non-finite value")
                continue
            if resp <= 0:
                issues.append(f"line {lineno}: nonpositive response {resp}")
                continue
            for cname, cval in zip(covariate_cols, covs):
                if cname.startswith("pressure") and not (PRESSURE_BAND[0] < cval < PRESSURE_BAND[1]):
                    issues.append(f"line {lineno}: pressure {cval} outside {PRESSURE_BAND}")
                    break
            else:
                date = row[date_idx].strip() if date_idx is not None else None
                if date:
                    if date in seen_dates:
                        issues.append(
                            f"line {lineno}: duplicate date {date!r} "
                            f"(first seen line {seen_dates[date]})"
                        )
                        continue
                    seen_dates[date] = lineno
                records.append(Record(date, resp, covs))

    if not records:
        raise LoadError("no data rows", issues)
    resp = np.array([r.response for r in records])
    y = np.log(resp) if log_response else resp
    X = np.column_stack([np.ones(len(records))]
                        + [np.array([r.covariates[j] for r in records])
                           for j in range(len(covariate_cols))])
    labels = ("intercept", *covariate_cols)
    return RegressionData(y, X, labels), records, issues


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    minimum: float
    median: float
    mean: float
    maximum: float
    sd: float
    skewness: Optional[float]
    kurtosis: Optional[float]


def descriptive_stats(values) -> DescriptiveStats:
    """Summary statistics: sd with the n-1 denominator; skewness m3/m2^(3/2)
    and kurtosis m4/m2^2 from the 1/n central moments (kurtosis is 3 for the
    normal). Undefined for constant input; reported as None."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    m = v.mean()
    d = v - m
    m2 = np.mean(d * d)
    if m2 == 0.0:
        skew = kurt = None
    else:
        skew = float(np.mean(d**3) / m2**1.5)
        kurt = float(np.mean(d**4) / (m2 * m2))
    return DescriptiveStats(
        n=v.size,
        minimum=float(v.min()),
        median=float(np.median(v)),
        mean=float(m),
        maximum=float(v.max()),
        sd=float(v.std(ddof=1)),
        skewness=skew,
        kurtosis=kurt,
    )


def acf(series, max_lag: int):
    """Sample autocorrelation with the biased (1/n) denominator, lags
    0..max_lag, plus the +-1.96/sqrt(n) white-noise band."""
    v = np.asarray(series, dtype=float)
    n = v.size
    if not 0 < max_lag < n / 2:
        raise ValueError("need 0 < max_lag < n/2")
    d = v - v.mean()
    denom = float(d @ d)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[:-k] @ d[k:]) / denom
    return out, 1.96 / math.sqrt(n)


def parse_scenario_config(path) -> Dict[str, str]:
    """key=value lines; blank lines and #-comments ignored."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LoadError(f"scenario config line {lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _json_escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return "".join(out)


def _json_value(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f) or math.isinf(f):
            return "null"
        return f"{f:.17g}"
    if isinstance(v, str):
        return f'"{_json_escape(v)}"'
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f'{pad}"{_json_escape(str(k))}": {_json_value(x, indent, level + 1)}'
                 for k, x in v.items()]
        return "{\n" + ",\n".join(items) + f"\n{end_pad}}}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        items = [f"{pad}{_json_value(x, indent, level + 1)}" for x in v]
        return "[\n" + ",\n".join(items) + f"\n{end_pad}]"
    raise TypeError(f"cannot serialize {type(v)!r}")


def dumps_stable(obj, indent: int = 2) -> str:
    """Deterministic JSON: insertion-ordered keys, floats rendered with 17
    significant digits (lossless round-trip), non-finite values as null."""
    return _json_value(obj, indent, 0) + "\n"
