"""Reading share-event and weekly-series files; writing tables and JSON deterministically."""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from pathlib import Path

import numpy as np

from .coordination import ShareEvent, normalize_url
from .errors import DataError
from .its.series import WeeklySeries
from .sim.ensemble import EnsembleSummary

EVENT_COLUMNS = ("venue_id", "url", "timestamp")
SERIES_COLUMNS = ("date", "value")
SUMMARY_COLUMNS = ("week", "posts_p05", "posts_median", "posts_p95", "eng_p05", "eng_median", "eng_p95",
                   "moderators_median", "demand_median", "active_venues_median")


def _rows(path, required):
    """Yield (line number, row dict) after checking the header."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: header must contain {', '.join(required)}; missing {', '.join(missing)}")
        for row in reader:
            yield reader.line_num, row


def parse_timestamp(text: str) -> int:
    """Integer epoch seconds, or ISO-8601 (naive times are taken as UTC)."""
    text = text.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = dt.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=dt.timezone.utc)
    return int(stamp.timestamp())


def read_events(path, strip_query: bool = True) -> list[ShareEvent]:
    events = []
    for line, row in _rows(path, EVENT_COLUMNS):
        try:
            stamp = parse_timestamp(row["timestamp"] or "")
            events.append(ShareEvent((row["venue_id"] or "").strip(),
                                     normalize_url(row["url"] or "", strip_query), stamp))
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}, line {line}: {exc}") from exc
    return events


def read_series(path, label: str = "") -> WeeklySeries:
    """A ``date,value`` file of consecutive weeks; a blank value is a missing week."""
    dates, values = [], []
    for line, row in _rows(path, SERIES_COLUMNS):
        try:
            date = dt.date.fromisoformat((row["date"] or "").strip())
            raw = (row["value"] or "").strip()
            value = float(raw) if raw else math.nan
        except ValueError as exc:
            raise DataError(f"{path}, line {line}: {exc}") from exc
        if math.isinf(value):
            raise DataError(f"{path}, line {line}: value must be finite")
        if dates and date - dates[-1] != dt.timedelta(weeks=1):
            raise DataError(f"{path}, line {line}: dates must be consecutive weeks ({dates[-1]} then {date})")
        dates.append(date)
        values.append(value)
    if not dates:
        raise DataError(f"{path}: no data rows")
    return WeeklySeries(dates[0], np.array(values), label or Path(path).stem)


def format_value(value) -> str:
    """Shortest round-trip text for floats; empty for missing."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_json_safe(obj), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def summary_rows(summary: EnsembleSummary) -> list[list]:
    rows = []
    for i, week in enumerate(summary.weeks):
        rows.append([int(week), *summary.posts[:, i], *summary.engagements[:, i], summary.moderators_median[i],
                     summary.demand_median[i], summary.active_venues_median[i]])
    return rows
