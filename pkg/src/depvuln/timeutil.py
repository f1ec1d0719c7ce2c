from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Optional, Union

# Smallest time step; a release at t is visible to resolutions at t + TICK.
TICK = timedelta(milliseconds=1)


def parse_time(value: Union[str, datetime, None]) -> Optional[datetime]:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Naive inputs are taken as UTC.  ``None``, empty strings and ``"unknown"``
    map to ``None``.
    """
    if value is None:
        return None
    if isinstance(value, datetime):
        dt = value
    else:
        text = value.strip()
        if not text or text.lower() == "unknown":
            return None
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        if len(text) == 10:
            text += "T00:00:00+00:00"
        dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: Optional[datetime]) -> Optional[str]:
    if dt is None:
        return None
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def just_after(dt: datetime) -> datetime:
    return dt + TICK
