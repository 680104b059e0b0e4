"""Clock literals, named day periods, seasons, and day types.

All rule-visible time semantics live here so the parser, the interpreter,
and the conflict analyzer agree on what "Morning" or "2AM" means.
"""

from __future__ import annotations

import datetime as dt
import re

# Named periods as [start, end) minutes of day. Night wraps midnight.
PERIODS: dict[str, tuple[int, int]] = {
    "Morning": (6 * 60, 12 * 60),
    "Afternoon": (12 * 60, 18 * 60),
    "Evening": (18 * 60, 22 * 60),
    "Night": (22 * 60, 6 * 60),
    "AM": (0, 12 * 60),
    "PM": (12 * 60, 24 * 60),
}

# Meteorological seasons, northern-hemisphere month sets by default.
SEASON_MONTHS_NORTH: dict[str, tuple[int, ...]] = {
    "Spring": (3, 4, 5),
    "Summer": (6, 7, 8),
    "Autumn": (9, 10, 11),
    "Winter": (12, 1, 2),
}

_CLOCK_RE = re.compile(r"^(\d{1,2}):(\d{2})$")
_AMPM_RE = re.compile(r"^(\d{1,2})\s*([AaPp])\.?\s?[Mm]\.?$")


def parse_clock(text: str) -> str | None:
    """Normalize a clock literal to 24h HH:MM, or None if it is not one.

    Accepts "14:30", "2AM", "2 A.M", "12 p.m." and the like.
    """
    text = text.strip()
    m = _CLOCK_RE.match(text)
    if m:
        hour, minute = int(m.group(1)), int(m.group(2))
        if hour < 24 and minute < 60:
            return f"{hour:02d}:{minute:02d}"
        return None
    m = _AMPM_RE.match(text)
    if m:
        hour = int(m.group(1))
        if not 1 <= hour <= 12:
            return None
        pm = m.group(2).lower() == "p"
        hour = hour % 12 + (12 if pm else 0)
        return f"{hour:02d}:00"
    return None


def clock_minutes(hhmm: str) -> int:
    hour, minute = hhmm.split(":")
    return int(hour) * 60 + int(minute)


def minutes_in_period(name: str, minute_of_day: int) -> bool:
    start, end = PERIODS[name]
    if start <= end:
        return start <= minute_of_day < end
    return minute_of_day >= start or minute_of_day < end


def period_of(minute_of_day: int) -> str:
    """The exclusive period name (Morning/Afternoon/Evening/Night)."""
    for name in ("Morning", "Afternoon", "Evening", "Night"):
        if minutes_in_period(name, minute_of_day):
            return name
    raise AssertionError("period table does not cover the day")


def season_of(date: dt.date, hemisphere: str = "north") -> str:
    for name, months in SEASON_MONTHS_NORTH.items():
        if date.month in months:
            if hemisphere == "south":
                return {"Spring": "Autumn", "Summer": "Winter",
                        "Autumn": "Spring", "Winter": "Summer"}[name]
            return name
    raise AssertionError("unreachable")


def easter_date(year: int) -> dt.date:
    """Gregorian Easter Sunday (anonymous computus)."""
    a = year % 19
    b, c = divmod(year, 100)
    d, e = divmod(b, 4)
    f = (b + 8) // 25
    g = (b - f + 1) // 3
    h = (19 * a + b - d - g + 15) % 30
    i, k = divmod(c, 4)
    l = (32 + 2 * e + 2 * i - h - k) % 7
    m = (a + 11 * h + 22 * l) // 451
    month = (h + l - 7 * m + 114) // 31
    day = (h + l - 7 * m + 114) % 31 + 1
    return dt.date(year, month, day)


def day_type(date: dt.date, holidays: frozenset[dt.date]) -> str:
    """weekday | weekend | holiday; an explicit holiday wins over weekend."""
    if date in holidays:
        return "holiday"
    return "weekend" if date.weekday() >= 5 else "weekday"


class TimeContext:
    """Everything the generic layer knows about the simulated moment."""

    def __init__(self, moment: dt.datetime, holidays: frozenset[dt.date] = frozenset(),
                 hemisphere: str = "north"):
        self.moment = moment
        self.minute_of_day = moment.hour * 60 + moment.minute
        self.clock = f"{moment.hour:02d}:{moment.minute:02d}"
        self.period = period_of(self.minute_of_day)
        self.day_type = day_type(moment.date(), holidays)
        self.season = season_of(moment.date(), hemisphere)
        self.holidays = holidays

    def keyword_truth(self, keyword: str, tick_seconds: int = 60) -> bool | None:
        """Truth of a date/time keyword now, or None when it has no semantics.

        Clock literals are true when the tick window [moment, moment+tick)
        covers the literal instant.
        """
        k = keyword if ":" not in keyword else None
        if k is None:  # clock literal HH:MM
            target = clock_minutes(keyword)
            window = max(1, tick_seconds // 60)
            lo = self.minute_of_day
            return any((lo + off) % (24 * 60) == target for off in range(window))
        canon = _canonical_time_keyword(k)
        if canon in PERIODS:
            return minutes_in_period(canon, self.minute_of_day)
        if canon in SEASON_MONTHS_NORTH:
            return self.season == canon
        date = self.moment.date()
        if canon == "Always":
            return True
        if canon == "Weekend":
            return self.day_type in ("weekend",) or (date.weekday() >= 5)
        if canon == "Holiday":
            return self.day_type == "holiday"
        if canon == "Xmas":
            return (date.month, date.day) == (12, 25)
        if canon == "Easter":
            return date == easter_date(date.year)
        if canon == "Today":
            return True
        if canon == "Tomorrow":
            return False
        return None  # Minute/Hour/Day/... carry no evaluation semantics


_TIME_KEYWORDS = list(PERIODS) + list(SEASON_MONTHS_NORTH) + [
    "Always", "Weekend", "Holiday", "Xmas", "Easter", "Today", "Tomorrow",
    "Minute", "Hour", "Day", "Week", "Month", "Year",
]
_TIME_CANON = {k.lower(): k for k in _TIME_KEYWORDS}


def _canonical_time_keyword(keyword: str) -> str:
    return _TIME_CANON.get(keyword.lower(), keyword)
