"""Clock helpers.

Timestamps are ISO-8601 local civil time with an explicit date. Internally all
arithmetic is done in minutes since the start of the service day, which is the
calendar date of the timestamp.
"""

from __future__ import annotations

import datetime as dt


def parse_timestamp(value) -> dt.datetime:
    if isinstance(value, dt.datetime):
        return value
    if isinstance(value, dt.date):
        return dt.datetime.combine(value, dt.time())
    return dt.datetime.fromisoformat(str(value).strip())


def parse_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value).strip())


def minute_of_day(ts: dt.datetime) -> float:
    return ts.hour * 60 + ts.minute + (ts.second + ts.microsecond / 1e6) / 60.0


def at_minute(day: dt.date, minutes: float) -> dt.datetime:
    return dt.datetime.combine(day, dt.time()) + dt.timedelta(minutes=minutes)


def format_timestamp(ts: dt.datetime) -> str:
    return ts.isoformat(timespec="seconds")
