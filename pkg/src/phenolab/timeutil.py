"""Integer epoch-second time handling.

All timestamps are stored as integer epoch seconds and resolved to the
study's local wall clock by adding a fixed offset from dataset.meta before
any day or period bucketing. Deliberately no tz database: field studies run
in one timezone and daylight-saving jumps inside a study are out of scope.
"""

from __future__ import annotations

from datetime import date, timedelta

SECONDS_PER_DAY = 86_400
_EPOCH = date(1970, 1, 1)


def to_local(t: int, tz_offset_s: int) -> int:
    """Shift an epoch timestamp into local wall-clock seconds."""
    return t + tz_offset_s


def day_index(local_s: int) -> int:
    """Days since 1970-01-01 of a local timestamp (floor division)."""
    return local_s // SECONDS_PER_DAY


def second_of_day(local_s: int) -> int:
    return local_s % SECONDS_PER_DAY


def day_to_date(day: int) -> date:
    return _EPOCH + timedelta(days=day)


def date_to_day(d: date) -> int:
    return (d - _EPOCH).days


def date_range(start: date, end: date) -> list[date]:
    """Inclusive list of calendar days from start to end."""
    if end < start:
        return []
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]
