"""Daily, group-tagged feature extraction over the three wall-clock periods.

Every extractor is a pure function of one user-day slice of localized events.
Sampled state streams (WiFi location, activity, audio) use carry-forward
attribution: a sample's state persists until the next sample or until a
maximum carry gap expires, clipped to the day; attributed spans are split
exactly across the period boundaries so the three periods always sum to the
whole-day attribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import RegistryMismatch
from .ingest import AcademicRecord, Dataset
from .registry import GROUPS, FeatureRegistry, default_registry
from .timeutil import SECONDS_PER_DAY, date_range, date_to_day, second_of_day, to_local

EARTH_RADIUS_KM = 6371.0
DEFAULT_MAX_CARRY_GAP_S = 600
MOVING_SPEED_KMS = 1.0 / 3600.0  # 1 km/h expressed in km/s


class DayPeriod(IntEnum):
    NIGHT = 0  # [00:00, 09:00)
    DAY = 1  # [09:00, 18:00)
    EVENING = 2  # [18:00, 24:00)


PERIOD_EDGES = (0, 9 * 3600, 18 * 3600, SECONDS_PER_DAY)
PERIODS = (DayPeriod.NIGHT, DayPeriod.DAY, DayPeriod.EVENING)


def period_of(local_t: int) -> DayPeriod:
    """Period owning a local timestamp; boundaries belong to the later period."""
    s = second_of_day(local_t)
    if s < PERIOD_EDGES[1]:
        return DayPeriod.NIGHT
    if s < PERIOD_EDGES[2]:
        return DayPeriod.DAY
    return DayPeriod.EVENING


def period_bounds(period: DayPeriod) -> tuple[int, int]:
    return PERIOD_EDGES[period], PERIOD_EDGES[period + 1]


# ---------------------------------------------------------------------------
# Carry-forward attribution
# ---------------------------------------------------------------------------


def carry_spans(
    events: list[tuple[int, object]], max_gap: int
) -> list[tuple[int, int, object]]:
    """Carry each (second_of_day, state) sample forward into [start, end) spans.

    A span ends at the next sample, at start+max_gap, or at midnight,
    whichever comes first. Empty spans (duplicate timestamps) are dropped.
    """
    spans = []
    for i, (t, state) in enumerate(events):
        nxt = events[i + 1][0] if i + 1 < len(events) else SECONDS_PER_DAY
        end = min(nxt, t + max_gap, SECONDS_PER_DAY)
        if end > t:
            spans.append((t, end, state))
    return spans


def split_span_by_period(start: int, end: int) -> list[tuple[DayPeriod, int]]:
    """Seconds of [start, end) falling into each period (skipping zeros)."""
    out = []
    for p in PERIODS:
        lo, hi = PERIOD_EDGES[p], PERIOD_EDGES[p + 1]
        overlap = min(end, hi) - max(start, lo)
        if overlap > 0:
            out.append((p, overlap))
    return out


def _pvar(values: list[float]) -> float:
    """Population variance (ddof=0); 0 for empty or singleton input."""
    n = len(values)
    if n == 0:
        return 0.0
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / n


def _pmean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def equirectangular_project(
    points: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Project (lat, lon) degrees to local km, centered on the mean latitude."""
    lat0 = math.radians(sum(p[0] for p in points) / len(points))
    cos0 = math.cos(lat0)
    return [
        (EARTH_RADIUS_KM * math.radians(lon) * cos0, EARTH_RADIUS_KM * math.radians(lat))
        for lat, lon in points
    ]


def convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(vertices: list[tuple[float, float]]) -> float:
    """Shoelace area of a simple polygon given in order."""
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def hull_area_km2(latlon: list[tuple[float, float]]) -> float:
    if len(latlon) < 3:
        return 0.0
    return polygon_area(convex_hull(equirectangular_project(latlon)))


# ---------------------------------------------------------------------------
# Extractors (one user-day each)
# ---------------------------------------------------------------------------

WIFI_BLOCK = 12  # per period
GPS_BLOCK = 10
SOCIAL_BLOCK = 3
AUDIO_BLOCK = 3
ACTIVITY_BLOCK = 4

_GPS_NFIX_SLOT = 8  # n_fixes position inside the GPS period block


def wifi_features(
    scans: list[tuple[int, str]],
    global_top7: list[str],
    user_top3: list[str],
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S,
) -> tuple[list[float], list[bool]]:
    """Per period: [n_locations, dwell_var, user top-3 dwell, global top-7 dwell]."""
    dwell: list[dict[str, int]] = [dict(), dict(), dict()]
    for start, end, loc in carry_spans(scans, max_gap):
        for p, seconds in split_span_by_period(start, end):
            dwell[p][loc] = dwell[p].get(loc, 0) + seconds
    visited: list[set[str]] = [set(), set(), set()]
    for t, loc in scans:
        visited[period_of(t)].add(loc)

    values: list[float] = []
    mask: list[bool] = []
    for p in PERIODS:
        has_data = bool(visited[p]) or bool(dwell[p])
        d = dwell[p]
        dwells_visited = [float(d.get(loc, 0)) for loc in sorted(visited[p])]
        block = [float(len(visited[p])), _pvar(dwells_visited)]
        for i in range(3):
            loc = user_top3[i] if i < len(user_top3) else None
            block.append(float(d.get(loc, 0)) if loc is not None else 0.0)
        for i in range(7):
            loc = global_top7[i] if i < len(global_top7) else None
            block.append(float(d.get(loc, 0)) if loc is not None else 0.0)
        values.extend(block)
        mask.extend([not has_data] * WIFI_BLOCK)
    return values, mask


def gps_features(
    fixes: list[tuple[int, float, float, bool | None]],
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S,
    moving_speed_kms: float = MOVING_SPEED_KMS,
) -> tuple[list[float], list[bool]]:
    """Per period: [max step, total dist, step var, mean speed, speed var,
    hull area, indoor s, outdoor s, n fixes, fraction of step time moving].

    Steps between consecutive fixes are assigned to the period of their
    starting fix; indoor/outdoor carry-forward clips at that period's end.
    Periods with fewer than two fixes report zeros with the mask set for
    everything except n_fixes.
    """
    steps: list[list[tuple[float, int]]] = [[], [], []]
    indoor_s = [0, 0, 0]
    outdoor_s = [0, 0, 0]
    points: list[list[tuple[float, float]]] = [[], [], []]
    n_fixes = [0, 0, 0]

    for i, (t, lat, lon, indoor) in enumerate(fixes):
        p = period_of(t)
        n_fixes[p] += 1
        points[p].append((lat, lon))
        nxt = fixes[i + 1][0] if i + 1 < len(fixes) else SECONDS_PER_DAY
        if i + 1 < len(fixes):
            dist = haversine_km(lat, lon, fixes[i + 1][1], fixes[i + 1][2])
            steps[p].append((dist, nxt - t))
        if indoor is not None:
            end = min(nxt, t + max_gap, PERIOD_EDGES[p + 1])
            if end > t:
                if indoor:
                    indoor_s[p] += end - t
                else:
                    outdoor_s[p] += end - t

    values: list[float] = []
    mask: list[bool] = []
    for p in PERIODS:
        if n_fixes[p] <= 1:
            block = [0.0] * GPS_BLOCK
            block[_GPS_NFIX_SLOT] = float(n_fixes[p])
            block_mask = [True] * GPS_BLOCK
            block_mask[_GPS_NFIX_SLOT] = False
        else:
            dists = [d for d, _ in steps[p]]
            speeds = [d / dur for d, dur in steps[p] if dur > 0]
            timed = [(d, dur) for d, dur in steps[p] if dur > 0]
            total_t = sum(dur for _, dur in timed)
            moving_t = sum(dur for d, dur in timed if d / dur > moving_speed_kms)
            block = [
                max(dists) if dists else 0.0,
                sum(dists),
                _pvar(dists),
                _pmean(speeds),
                _pvar(speeds),
                hull_area_km2(points[p]),
                float(indoor_s[p]),
                float(outdoor_s[p]),
                float(n_fixes[p]),
                moving_t / total_t if total_t > 0 else 0.0,
            ]
            block_mask = [False] * GPS_BLOCK
        values.extend(block)
        mask.extend(block_mask)
    return values, mask


def social_features(
    events: list[tuple[int, str, int]]
) -> tuple[list[float], list[bool]]:
    """Per period: [sms+call count, app+bluetooth count, call seconds]."""
    comm = [0, 0, 0]
    ambient = [0, 0, 0]
    call_s = [0, 0, 0]
    seen = [False, False, False]
    for t, kind, duration_s in events:
        p = period_of(t)
        seen[p] = True
        if kind in ("sms", "call"):
            comm[p] += 1
        else:
            ambient[p] += 1
        if kind == "call":
            call_s[p] += duration_s
    values: list[float] = []
    mask: list[bool] = []
    for p in PERIODS:
        values.extend([float(comm[p]), float(ambient[p]), float(call_s[p])])
        mask.extend([not seen[p]] * SOCIAL_BLOCK)
    return values, mask


_PHONESTATE_ORDER = ("charging", "locked", "dark")


def phonelog_features(
    intervals: list[tuple[int, int, str]]
) -> tuple[list[float], list[bool]]:
    """Per period [charge, lock, dark] seconds, then daily totals and the
    number of charge/lock sessions. Intervals must already be clipped to the
    day (seconds of day, half-open)."""
    per_period = {k: [0, 0, 0] for k in _PHONESTATE_ORDER}
    sessions = {k: 0 for k in _PHONESTATE_ORDER}
    for start, end, kind in intervals:
        if end <= start or kind not in per_period:
            continue
        sessions[kind] += 1
        for p, seconds in split_span_by_period(start, end):
            per_period[kind][p] += seconds

    values: list[float] = []
    mask: list[bool] = []
    for p in PERIODS:
        for kind in _PHONESTATE_ORDER:
            values.append(float(per_period[kind][p]))
            mask.append(sessions[kind] == 0)
    daily = [float(sum(per_period[k])) for k in _PHONESTATE_ORDER]
    values.extend(daily)
    mask.extend([sessions[k] == 0 for k in _PHONESTATE_ORDER])
    values.extend([float(sessions["charging"]), float(sessions["locked"])])
    mask.extend([sessions["charging"] == 0, sessions["locked"] == 0])
    return values, mask


def _state_time_features(
    samples: list[tuple[int, str]], states: tuple[str, ...], max_gap: int
) -> tuple[list[float], list[bool]]:
    seconds = {s: [0, 0, 0] for s in states}
    touched = [False, False, False]
    for start, end, state in carry_spans(samples, max_gap):
        if state not in seconds:
            continue
        for p, secs in split_span_by_period(start, end):
            seconds[state][p] += secs
            touched[p] = True
    for t, _ in samples:
        touched[period_of(t)] = True
    values: list[float] = []
    mask: list[bool] = []
    for p in PERIODS:
        values.extend(float(seconds[s][p]) for s in states)
        mask.extend([not touched[p]] * len(states))
    return values, mask


def activity_features(
    samples: list[tuple[int, str]], max_gap: int = DEFAULT_MAX_CARRY_GAP_S
) -> tuple[list[float], list[bool]]:
    """Per period carry-forward seconds in stationary/walking/running/unknown."""
    return _state_time_features(
        samples, ("stationary", "walking", "running", "unknown"), max_gap
    )


def audio_features(
    samples: list[tuple[int, str]], max_gap: int = DEFAULT_MAX_CARRY_GAP_S
) -> tuple[list[float], list[bool]]:
    """Per period carry-forward seconds in silence/voice/noise."""
    return _state_time_features(samples, ("silence", "voice", "noise"), max_gap)


def academic_features(
    record: AcademicRecord | None,
) -> tuple[list[float], list[bool]]:
    """Daily academic block: raw counts, deadline distance, class hours and a
    {Mon-Thu, Fri, Sat, Sun} one-hot plus a deadline-day indicator."""
    if record is None:
        return [0.0] * 13, [True] * 13
    dow = record.day_of_week
    values = [
        record.gpa,
        float(record.page_views),
        float(record.contributions),
        float(record.questions),
        float(record.notes),
        float(record.answers),
        float(record.days_to_deadline),
        record.class_hours,
        1.0 if dow <= 3 else 0.0,
        1.0 if dow == 4 else 0.0,
        1.0 if dow == 5 else 0.0,
        1.0 if dow == 6 else 0.0,
        1.0 if record.days_to_deadline == 0 else 0.0,
    ]
    return values, [False] * 13


# ---------------------------------------------------------------------------
# WiFi top-location lists (leakage-sensitive: fit on training rows only)
# ---------------------------------------------------------------------------


@dataclass
class WifiTopLocations:
    global_top: list[str]  # up to 7
    user_top: dict[str, list[str]]  # up to 3 per user

    def for_user(self, user: str) -> list[str]:
        return self.user_top.get(user, [])


def fit_wifi_tops(
    dataset: Dataset,
    train_days: set[date] | None = None,
    train_users: set[str] | None = None,
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S,
) -> WifiTopLocations:
    """Rank locations by total carry-forward dwell seconds.

    ``train_days`` restricts which calendar days count (chronological splits);
    ``train_users`` restricts whose dwell feeds the *global* ranking
    (leave-one-user-out). Per-user rankings always use the user's own scans so
    held-out users keep meaningful top-location features.
    """
    tz = dataset.meta.timezone_offset_s
    day_filter = {date_to_day(d) for d in train_days} if train_days is not None else None
    per_day: dict[tuple[str, int], list[tuple[int, str]]] = {}
    for scan in dataset.wifi:
        local = to_local(scan.t, tz)
        day = local // SECONDS_PER_DAY
        if day_filter is not None and day not in day_filter:
            continue
        per_day.setdefault((scan.user, day), []).append(
            (local % SECONDS_PER_DAY, scan.location)
        )

    global_dwell: dict[str, int] = {}
    user_dwell: dict[str, dict[str, int]] = {}
    for (user, _day), scans in per_day.items():
        scans.sort()
        for start, end, loc in carry_spans(scans, max_gap):
            seconds = end - start
            d = user_dwell.setdefault(user, {})
            d[loc] = d.get(loc, 0) + seconds
            if train_users is None or user in train_users:
                global_dwell[loc] = global_dwell.get(loc, 0) + seconds

    def ranked(d: dict[str, int], k: int) -> list[str]:
        return [loc for loc, _ in sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]

    return WifiTopLocations(
        global_top=ranked(global_dwell, 7),
        user_top={u: ranked(d, 3) for u, d in sorted(user_dwell.items())},
    )


# ---------------------------------------------------------------------------
# Feature matrix
# ---------------------------------------------------------------------------


@dataclass
class FeatureMatrix:
    registry: FeatureRegistry
    users: list[str]  # per row
    dates: list[date]  # per row
    values: np.ndarray  # (n_rows, n_features) float64
    mask: np.ndarray  # (n_rows, n_features) bool; True = no underlying data

    def row_index(self) -> dict[tuple[str, date], int]:
        return {(u, d): i for i, (u, d) in enumerate(zip(self.users, self.dates))}

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def _slice_events(events, tz: int, to_tuple) -> dict[tuple[str, int], list]:
    out: dict[tuple[str, int], list] = {}
    for e in events:
        local = to_local(e.t, tz)
        out.setdefault((e.user, local // SECONDS_PER_DAY), []).append(
            to_tuple(e, local % SECONDS_PER_DAY)
        )
    for v in out.values():
        v.sort(key=lambda item: item[0])
    return out


def _slice_intervals(intervals, tz: int) -> dict[tuple[str, int], list]:
    out: dict[tuple[str, int], list] = {}
    for iv in intervals:
        start, end = to_local(iv.start, tz), to_local(iv.end, tz)
        for day in range(start // SECONDS_PER_DAY, (end - 1) // SECONDS_PER_DAY + 1):
            base = day * SECONDS_PER_DAY
            lo = max(start - base, 0)
            hi = min(end - base, SECONDS_PER_DAY)
            if hi > lo:
                out.setdefault((iv.user, day), []).append((lo, hi, iv.kind))
    for v in out.values():
        v.sort()
    return out


def build_feature_matrix(
    dataset: Dataset,
    registry: FeatureRegistry | None = None,
    tops: WifiTopLocations | None = None,
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S,
    dates: list[date] | None = None,
) -> FeatureMatrix:
    """One feature vector per (user, day) over the study range.

    Missing underlying data zero-fills values and sets the missing mask.
    ``tops`` defaults to fitting on the whole dataset; pass training-only tops
    for leak-free pipelines.
    """
    registry = registry if registry is not None else default_registry()
    tops = tops if tops is not None else fit_wifi_tops(dataset, max_gap=max_gap)
    tz = dataset.meta.timezone_offset_s
    days = dates if dates is not None else date_range(
        dataset.meta.study_start, dataset.meta.study_end
    )

    wifi = _slice_events(dataset.wifi, tz, lambda e, s: (s, e.location))
    gps = _slice_events(dataset.gps, tz, lambda e, s: (s, e.lat, e.lon, e.indoor))
    comm = _slice_events(dataset.comm, tz, lambda e, s: (s, e.kind, e.duration_s))
    act = _slice_events(dataset.activity, tz, lambda e, s: (s, e.state))
    aud = _slice_events(dataset.audio, tz, lambda e, s: (s, e.state))
    phone = _slice_intervals(dataset.phonestate, tz)
    academic = {(r.user, r.date): r for r in dataset.academic}

    group_cols = {g: registry.group_indices(g) for g in GROUPS}
    n = len(dataset.users) * len(days)
    values = np.zeros((n, len(registry)), dtype=np.float64)
    mask = np.zeros((n, len(registry)), dtype=bool)
    row_users: list[str] = []
    row_dates: list[date] = []

    row = 0
    for user in dataset.users:
        utop = tops.for_user(user)
        for d in days:
            day = date_to_day(d)
            key = (user, day)
            blocks = {
                "wifi": wifi_features(wifi.get(key, []), tops.global_top, utop, max_gap),
                "gps": gps_features(gps.get(key, []), max_gap),
                "social": social_features(comm.get(key, [])),
                "phonelog": phonelog_features(phone.get(key, [])),
                "activity": activity_features(act.get(key, []), max_gap),
                "audio": audio_features(aud.get(key, []), max_gap),
                "academic": academic_features(academic.get((user, d))),
            }
            for group, (vals, miss) in blocks.items():
                cols = group_cols[group]
                if len(vals) != len(cols):
                    raise RegistryMismatch(
                        f"extractor {group!r} emitted {len(vals)} values, "
                        f"registry declares {len(cols)}"
                    )
                values[row, cols] = vals
                mask[row, cols] = miss
            row_users.append(user)
            row_dates.append(d)
            row += 1

    if not np.isfinite(values).all():
        raise ValueError("feature matrix contains non-finite values")
    return FeatureMatrix(registry, row_users, row_dates, values, mask)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def standardize(
    matrix: FeatureMatrix, fit_rows: np.ndarray
) -> tuple[FeatureMatrix, np.ndarray, np.ndarray]:
    """Z-score each column using statistics from ``fit_rows`` only.

    Statistics are computed over unmasked entries; masked entries stay 0
    (equivalent to mean imputation after standardization); zero-variance
    columns map to 0.
    """
    fit_rows = np.asarray(fit_rows)
    if fit_rows.size == 0:
        raise ValueError("fit_rows must be non-empty")
    v = matrix.values[fit_rows]
    observed = ~matrix.mask[fit_rows]
    count = observed.sum(axis=0)
    safe = np.maximum(count, 1)
    mean = np.where(count > 0, (v * observed).sum(axis=0) / safe, 0.0)
    var = np.where(count > 0, (((v - mean) * observed) ** 2).sum(axis=0) / safe, 0.0)
    std = np.sqrt(var)

    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, (matrix.values - mean) / np.where(std > 0, std, 1.0), 0.0)
    z[matrix.mask] = 0.0
    out = FeatureMatrix(
        matrix.registry, matrix.users, matrix.dates, z, matrix.mask.copy()
    )
    return out, mean, std


# ---------------------------------------------------------------------------
# features.csv
# ---------------------------------------------------------------------------


def write_features_csv(matrix: FeatureMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "date"] + matrix.registry.names)
        for i in range(matrix.n_rows):
            row = [matrix.users[i], matrix.dates[i].isoformat()]
            row.extend(repr(v) for v in matrix.values[i].tolist())
            writer.writerow(row)
