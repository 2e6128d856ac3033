"""CSV artifact readers with strict schema validation.

Figures are pure views: every number shown comes from a file, nothing is
recomputed here.  Fits are kept both as parsed floats (for positioning) and
as the verbatim file strings (for annotations, so a label always equals the
fits.csv entry character for character).
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass


class SchemaError(Exception):
    """Artifact directory does not match the documented column schema."""


SERIES_COLUMNS = ["t", "w_L2", "w_Heps1", "theta_L2", "theta_Heps1",
                  "theta_L4_scaled", "minus_mass", "mass_drift", "g_Heps1"]
FITS_ORDER_COLUMNS = ["quantity", "order", "intercept", "residual_rms",
                      "n_points"]
FITS_REGRESSION_COLUMNS = ["fit", "slope", "intercept", "r_squared",
                           "residual_rms"]
BREAKDOWN_COLUMNS = ["eps", "t_star", "reached"]
INTERACTION_COLUMNS = ["eps", "gamma", "measure", "n_intervals",
                       "max_interval", "Gamma", "min_accel"]

_SERIES_RE = re.compile(r"series_eps_(.+)\.csv$")


def _read_rows(path: str, required: list) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{os.path.basename(path)}: missing columns "
                              f"{missing} (have {header})")
        return list(reader)


@dataclass
class SeriesFile:
    eps: float
    rows: list

    def column(self, name: str) -> list:
        return [float(r[name]) for r in self.rows]

    def sup(self, name: str) -> float:
        vals = [v for v in self.column(name) if not math.isnan(v)]
        return max(vals) if vals else float("nan")


def _eps_from_tag(tag: str) -> float:
    try:
        return 2.0 ** -int(tag)
    except ValueError:
        return float(tag)


def load_series(directory: str) -> list:
    """All series_eps_*.csv files, sorted by decreasing eps."""
    if not os.path.isdir(directory):
        raise SchemaError(f"not a directory: {directory}")
    out = []
    for name in sorted(os.listdir(directory)):
        m = _SERIES_RE.match(name)
        if not m:
            continue
        rows = _read_rows(os.path.join(directory, name), SERIES_COLUMNS)
        out.append(SeriesFile(eps=_eps_from_tag(m.group(1)), rows=rows))
    if not out:
        raise SchemaError(f"no series_eps_*.csv files in {directory}")
    out.sort(key=lambda s: -s.eps)
    return out


@dataclass
class FitEntry:
    values: dict       # parsed floats
    raw: dict          # verbatim strings from the file


def load_fits(directory: str) -> dict:
    """fits.csv keyed by its first column; handles both layouts."""
    path = os.path.join(directory, "fits.csv")
    if not os.path.exists(path):
        raise SchemaError(f"missing fits.csv in {directory}")
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header == FITS_ORDER_COLUMNS:
        key = "quantity"
    elif header == FITS_REGRESSION_COLUMNS:
        key = "fit"
    else:
        raise SchemaError(f"fits.csv: unrecognized header {header}")
    rows = _read_rows(path, header)
    out = {}
    for r in rows:
        vals = {}
        for c in header[1:]:
            try:
                vals[c] = float(r[c])
            except ValueError:
                vals[c] = float("nan")
        out[r[key]] = FitEntry(values=vals, raw=dict(r))
    return out


def load_breakdown(directory: str) -> list:
    path = os.path.join(directory, "breakdown.csv")
    if not os.path.exists(path):
        raise SchemaError(f"missing breakdown.csv in {directory}")
    rows = _read_rows(path, BREAKDOWN_COLUMNS)
    out = []
    for r in rows:
        t = float(r["t_star"]) if r["t_star"] else None
        out.append((float(r["eps"]), t))
    return out


def load_interaction(directory: str) -> list:
    path = os.path.join(directory, "interaction.csv")
    if not os.path.exists(path):
        raise SchemaError(f"missing interaction.csv in {directory}")
    rows = _read_rows(path, INTERACTION_COLUMNS)
    return [(float(r["eps"]), float(r["measure"]), float(r["gamma"]))
            for r in rows]
