"""Raw sensor-log ingestion into validated canonical event streams.

Two directory adapters exist: the first-class ``canonical`` layout of
per-stream CSV files (schemas in `CANONICAL_SCHEMAS`), and a ``studentlife``
adapter that maps the published StudentLife dataset layout onto the same
streams. Everything downstream sees only canonical streams.

Malformed rows are skipped and counted in a per-file report by default;
``strict=True`` upgrades them to SchemaError/RangeError.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import MissingStream, RangeError, SchemaError
from .timeutil import day_index, to_local

ACTIVITY_CLASSES = ("stationary", "walking", "running", "unknown")
AUDIO_CLASSES = ("silence", "voice", "noise")
PHONESTATE_KINDS = ("charging", "locked", "dark")
COMM_KINDS = ("sms", "call", "app_usage", "bluetooth_contact")

STRESS_LEVEL_MIN, STRESS_LEVEL_MAX = 1, 5
PHQ9_MIN, PHQ9_MAX = 0, 27


# ---------------------------------------------------------------------------
# Canonical event types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class WifiScan:
    user: str
    t: int
    location: str


@dataclass(frozen=True, order=True)
class GpsFix:
    user: str
    t: int
    lat: float
    lon: float
    indoor: bool | None = None


@dataclass(frozen=True, order=True)
class ActivitySample:
    user: str
    t: int
    state: str  # one of ACTIVITY_CLASSES


@dataclass(frozen=True, order=True)
class AudioSample:
    user: str
    t: int
    state: str  # one of AUDIO_CLASSES


@dataclass(frozen=True, order=True)
class PhoneStateInterval:
    user: str
    start: int
    end: int  # half-open [start, end)
    kind: str  # one of PHONESTATE_KINDS


@dataclass(frozen=True, order=True)
class CommEvent:
    user: str
    t: int
    kind: str  # one of COMM_KINDS
    duration_s: int = 0  # nonzero only for calls


@dataclass(frozen=True, order=True)
class AcademicRecord:
    user: str
    date: date
    gpa: float
    page_views: int
    contributions: int
    questions: int
    notes: int
    answers: int
    days_to_deadline: int
    class_hours: float
    day_of_week: int  # 0=Monday .. 6=Sunday, derived from date


@dataclass(frozen=True, order=True)
class EmaStress:
    user: str
    t: int
    level: int  # 1..5


@dataclass(frozen=True, order=True)
class Phq9Score:
    user: str
    score: int  # 0..27


@dataclass(frozen=True)
class DatasetMeta:
    timezone_offset_s: int
    study_start: date
    study_end: date


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class RowIssue:
    path: str
    line: int
    reason: str


@dataclass
class FileReport:
    path: str
    rows: int = 0
    kept: int = 0
    issues: list[RowIssue] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.issues)


@dataclass
class ParseReport:
    files: list[FileReport] = field(default_factory=list)

    def new_file(self, path: str) -> FileReport:
        fr = FileReport(path=path)
        self.files.append(fr)
        return fr

    @property
    def total_rows(self) -> int:
        return sum(f.rows for f in self.files)

    @property
    def total_skipped(self) -> int:
        return sum(f.skipped for f in self.files)

    def summary(self) -> str:
        lines = []
        for f in self.files:
            lines.append(f"{f.path}: rows={f.rows} kept={f.kept} skipped={f.skipped}")
            for issue in f.issues[:20]:
                lines.append(f"  line {issue.line}: {issue.reason}")
            if len(f.issues) > 20:
                lines.append(f"  ... {len(f.issues) - 20} more")
        return "\n".join(lines)


@dataclass
class ValidationReport:
    """Outcome of validating one canonical stream (report-only)."""

    total: int
    kept: int
    dropped: int
    dropped_by_reason: dict[str, int]
    duplicates: int
    events: list  # kept events, deduplicated and sorted


@dataclass
class Dataset:
    meta: DatasetMeta
    wifi: list[WifiScan] = field(default_factory=list)
    gps: list[GpsFix] = field(default_factory=list)
    activity: list[ActivitySample] = field(default_factory=list)
    audio: list[AudioSample] = field(default_factory=list)
    phonestate: list[PhoneStateInterval] = field(default_factory=list)
    comm: list[CommEvent] = field(default_factory=list)
    academic: list[AcademicRecord] = field(default_factory=list)
    ema_stress: list[EmaStress] = field(default_factory=list)
    phq9: list[Phq9Score] = field(default_factory=list)
    users: list[str] = field(default_factory=list)
    report: ParseReport = field(default_factory=ParseReport, compare=False)

    STREAMS = (
        "wifi",
        "gps",
        "activity",
        "audio",
        "phonestate",
        "comm",
        "academic",
        "ema_stress",
        "phq9",
    )

    def same_data(self, other: "Dataset") -> bool:
        """Equality over meta and streams, ignoring parse reports."""
        if self.meta != other.meta or self.users != other.users:
            return False
        return all(
            getattr(self, s) == getattr(other, s) for s in self.STREAMS
        )


# ---------------------------------------------------------------------------
# Canonical CSV schemas
# ---------------------------------------------------------------------------

CANONICAL_SCHEMAS: dict[str, list[str]] = {
    "wifi.csv": ["user", "t", "location"],
    "gps.csv": ["user", "t", "lat", "lon", "indoor"],
    "activity.csv": ["user", "t", "class"],
    "audio.csv": ["user", "t", "class"],
    "phonestate.csv": ["user", "start", "end", "kind"],
    "comm.csv": ["user", "t", "kind", "duration_s"],
    "academic.csv": [
        "user",
        "date",
        "gpa",
        "page_views",
        "contributions",
        "questions",
        "notes",
        "answers",
        "days_to_deadline",
        "class_hours",
    ],
    "ema_stress.csv": ["user", "t", "level"],
    "phq9.csv": ["user", "score"],
}

META_FILE = "dataset.meta"


class _Row:
    """One CSV row with typed accessors that raise ValueError on bad data."""

    def __init__(self, values: dict[str, str]):
        self.values = values

    def str_(self, key: str) -> str:
        v = self.values[key].strip()
        if not v:
            raise ValueError(f"{key} must be non-empty")
        return v

    def int_(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ValueError(f"{key}={self.values[key]!r} is not an integer")

    def float_(self, key: str) -> float:
        try:
            v = float(self.values[key])
        except ValueError:
            raise ValueError(f"{key}={self.values[key]!r} is not a number")
        if not math.isfinite(v):
            raise ValueError(f"{key} must be finite")
        return v

    def date_(self, key: str) -> date:
        return date.fromisoformat(self.values[key].strip())


class _RangeViolation(ValueError):
    """Marks a value outside documented bounds (reported as RangeError)."""


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise _RangeViolation(msg)


def _parse_wifi(row: _Row) -> WifiScan:
    return WifiScan(row.str_("user"), row.int_("t"), row.str_("location"))


def _parse_gps(row: _Row) -> GpsFix:
    lat, lon = row.float_("lat"), row.float_("lon")
    _need(-90.0 <= lat <= 90.0, f"lat {lat} outside [-90, 90]")
    _need(-180.0 <= lon <= 180.0, f"lon {lon} outside [-180, 180]")
    raw = row.values["indoor"].strip()
    indoor = None if raw == "" else bool(int(raw))
    return GpsFix(row.str_("user"), row.int_("t"), lat, lon, indoor)


def _parse_activity(row: _Row) -> ActivitySample:
    state = row.str_("class")
    _need(state in ACTIVITY_CLASSES, f"class {state!r} not in {ACTIVITY_CLASSES}")
    return ActivitySample(row.str_("user"), row.int_("t"), state)


def _parse_audio(row: _Row) -> AudioSample:
    state = row.str_("class")
    _need(state in AUDIO_CLASSES, f"class {state!r} not in {AUDIO_CLASSES}")
    return AudioSample(row.str_("user"), row.int_("t"), state)


def _parse_phonestate(row: _Row) -> PhoneStateInterval:
    start, end = row.int_("start"), row.int_("end")
    kind = row.str_("kind")
    _need(kind in PHONESTATE_KINDS, f"kind {kind!r} not in {PHONESTATE_KINDS}")
    _need(start < end, f"start {start} must precede end {end}")
    return PhoneStateInterval(row.str_("user"), start, end, kind)


def _parse_comm(row: _Row) -> CommEvent:
    kind = row.str_("kind")
    _need(kind in COMM_KINDS, f"kind {kind!r} not in {COMM_KINDS}")
    duration = row.int_("duration_s")
    _need(duration >= 0, f"duration_s {duration} negative")
    _need(kind == "call" or duration == 0, "duration_s must be 0 unless kind=call")
    return CommEvent(row.str_("user"), row.int_("t"), kind, duration)


def _parse_academic(row: _Row) -> AcademicRecord:
    d = row.date_("date")
    gpa = row.float_("gpa")
    _need(gpa >= 0.0, f"gpa {gpa} negative")
    counts = {
        k: row.int_(k)
        for k in ("page_views", "contributions", "questions", "notes", "answers")
    }
    for k, v in counts.items():
        _need(v >= 0, f"{k} {v} negative")
    dtd = row.int_("days_to_deadline")
    _need(dtd >= 0, f"days_to_deadline {dtd} negative")
    hours = row.float_("class_hours")
    _need(hours >= 0.0, f"class_hours {hours} negative")
    return AcademicRecord(
        row.str_("user"), d, gpa, counts["page_views"], counts["contributions"],
        counts["questions"], counts["notes"], counts["answers"], dtd, hours,
        d.weekday(),
    )


def _parse_ema(row: _Row) -> EmaStress:
    level = row.int_("level")
    _need(
        STRESS_LEVEL_MIN <= level <= STRESS_LEVEL_MAX,
        f"stress level {level} outside [{STRESS_LEVEL_MIN}, {STRESS_LEVEL_MAX}]",
    )
    return EmaStress(row.str_("user"), row.int_("t"), level)


def _parse_phq9(row: _Row) -> Phq9Score:
    score = row.int_("score")
    _need(PHQ9_MIN <= score <= PHQ9_MAX, f"score {score} outside [0, 27]")
    return Phq9Score(row.str_("user"), score)


_PARSERS = {
    "wifi.csv": _parse_wifi,
    "gps.csv": _parse_gps,
    "activity.csv": _parse_activity,
    "audio.csv": _parse_audio,
    "phonestate.csv": _parse_phonestate,
    "comm.csv": _parse_comm,
    "academic.csv": _parse_academic,
    "ema_stress.csv": _parse_ema,
    "phq9.csv": _parse_phq9,
}


def _read_canonical_file(path: Path, name: str, strict: bool, report: ParseReport) -> list:
    schema = CANONICAL_SCHEMAS[name]
    parser = _PARSERS[name]
    fr = report.new_file(str(path))
    events = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(str(path), 1, "missing header row")
        if [h.strip() for h in header] != schema:
            raise SchemaError(
                str(path), 1, f"header {header!r} does not match {schema!r}"
            )
        for lineno, raw in enumerate(reader, start=2):
            if not raw or (len(raw) == 1 and not raw[0].strip()):
                continue
            fr.rows += 1
            if len(raw) != len(schema):
                if strict:
                    raise SchemaError(
                        str(path), lineno, f"expected {len(schema)} columns, got {len(raw)}"
                    )
                fr.issues.append(RowIssue(str(path), lineno, "column count mismatch"))
                continue
            row = _Row(dict(zip(schema, raw)))
            try:
                events.append(parser(row))
                fr.kept += 1
            except _RangeViolation as exc:
                if strict:
                    raise RangeError(str(path), lineno, str(exc)) from None
                fr.issues.append(RowIssue(str(path), lineno, str(exc)))
            except ValueError as exc:
                if strict:
                    raise SchemaError(str(path), lineno, str(exc)) from None
                fr.issues.append(RowIssue(str(path), lineno, str(exc)))
    return events


def _read_meta(path: Path) -> DatasetMeta:
    if not path.exists():
        raise MissingStream(f"required file absent: {path}")
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(str(path), lineno, f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    try:
        return DatasetMeta(
            timezone_offset_s=int(pairs["timezone_offset_s"]),
            study_start=date.fromisoformat(pairs["study_start"]),
            study_end=date.fromisoformat(pairs["study_end"]),
        )
    except KeyError as exc:
        raise SchemaError(str(path), 1, f"missing meta key {exc.args[0]}") from None


def merge_intervals(
    intervals: list[PhoneStateInterval],
) -> list[PhoneStateInterval]:
    """Union overlapping or adjacent intervals per (user, kind).

    Covers exactly the same set of seconds as the input (intervals are
    half-open [start, end)).
    """
    by_key: dict[tuple[str, str], list[PhoneStateInterval]] = {}
    for iv in intervals:
        by_key.setdefault((iv.user, iv.kind), []).append(iv)
    merged: list[PhoneStateInterval] = []
    for (user, kind), group in by_key.items():
        group.sort(key=lambda iv: (iv.start, iv.end))
        cur_start, cur_end = group[0].start, group[0].end
        for iv in group[1:]:
            if iv.start <= cur_end:
                cur_end = max(cur_end, iv.end)
            else:
                merged.append(PhoneStateInterval(user, cur_start, cur_end, kind))
                cur_start, cur_end = iv.start, iv.end
        merged.append(PhoneStateInterval(user, cur_start, cur_end, kind))
    merged.sort()
    return merged


def _roster(streams: dict[str, list]) -> list[str]:
    users: set[str] = set()
    for events in streams.values():
        users.update(e.user for e in events)
    return sorted(users)


def parse_dataset(root_dir, adapter: str = "canonical", strict: bool = False) -> Dataset:
    """Parse a dataset directory into sorted, validated canonical streams."""
    root = Path(root_dir)
    if not root.is_dir():
        raise MissingStream(f"dataset directory does not exist: {root}")
    if adapter == "canonical":
        return _parse_canonical(root, strict)
    if adapter == "studentlife":
        return _parse_studentlife(root, strict)
    raise ValueError(f"unknown adapter {adapter!r} (expected canonical or studentlife)")


def _parse_canonical(root: Path, strict: bool) -> Dataset:
    report = ParseReport()
    meta = _read_meta(root / META_FILE)
    streams: dict[str, list] = {}
    for name in CANONICAL_SCHEMAS:
        path = root / name
        if not path.exists():
            raise MissingStream(f"required file absent: {path}")
        streams[name] = _read_canonical_file(path, name, strict, report)
    return _assemble(meta, streams, report)


def _assemble(meta: DatasetMeta, streams: dict[str, list], report: ParseReport) -> Dataset:
    for events in streams.values():
        events.sort()
    streams["phonestate.csv"] = merge_intervals(streams["phonestate.csv"])
    return Dataset(
        meta=meta,
        wifi=streams["wifi.csv"],
        gps=streams["gps.csv"],
        activity=streams["activity.csv"],
        audio=streams["audio.csv"],
        phonestate=streams["phonestate.csv"],
        comm=streams["comm.csv"],
        academic=streams["academic.csv"],
        ema_stress=streams["ema_stress.csv"],
        phq9=streams["phq9.csv"],
        users=_roster(streams),
        report=report,
    )


# ---------------------------------------------------------------------------
# Stream validation (report-only)
# ---------------------------------------------------------------------------

_INVARIANTS = {
    WifiScan: lambda e: bool(e.user) and bool(e.location),
    GpsFix: lambda e: bool(e.user)
    and -90.0 <= e.lat <= 90.0
    and -180.0 <= e.lon <= 180.0
    and math.isfinite(e.lat)
    and math.isfinite(e.lon),
    ActivitySample: lambda e: bool(e.user) and e.state in ACTIVITY_CLASSES,
    AudioSample: lambda e: bool(e.user) and e.state in AUDIO_CLASSES,
    PhoneStateInterval: lambda e: bool(e.user)
    and e.kind in PHONESTATE_KINDS
    and e.start < e.end,
    CommEvent: lambda e: bool(e.user)
    and e.kind in COMM_KINDS
    and e.duration_s >= 0
    and (e.kind == "call" or e.duration_s == 0),
    AcademicRecord: lambda e: bool(e.user)
    and e.gpa >= 0
    and min(e.page_views, e.contributions, e.questions, e.notes, e.answers) >= 0
    and e.days_to_deadline >= 0
    and e.class_hours >= 0
    and e.day_of_week == e.date.weekday(),
    EmaStress: lambda e: bool(e.user)
    and STRESS_LEVEL_MIN <= e.level <= STRESS_LEVEL_MAX,
    Phq9Score: lambda e: bool(e.user) and PHQ9_MIN <= e.score <= PHQ9_MAX,
}


def validate_stream(events: list) -> ValidationReport:
    """Check a canonical stream's invariants; dedup and sort the keepers.

    Report-only: kept + dropped = total, duplicates count as dropped.
    """
    total = len(events)
    reasons: dict[str, int] = {}
    seen = set()
    kept = []
    duplicates = 0
    for e in events:
        check = _INVARIANTS.get(type(e))
        if check is None:
            reasons["unknown event type"] = reasons.get("unknown event type", 0) + 1
            continue
        if not check(e):
            reasons["invariant violation"] = reasons.get("invariant violation", 0) + 1
            continue
        if e in seen:
            duplicates += 1
            reasons["duplicate"] = reasons.get("duplicate", 0) + 1
            continue
        seen.add(e)
        kept.append(e)
    kept.sort()
    return ValidationReport(
        total=total,
        kept=len(kept),
        dropped=total - len(kept),
        dropped_by_reason=reasons,
        duplicates=duplicates,
        events=kept,
    )


# ---------------------------------------------------------------------------
# Canonical serialization (round-trip with parse_dataset)
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def write_canonical(ds: Dataset, out_dir) -> None:
    """Write a Dataset back out in the canonical directory layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_of = {
        "wifi.csv": [(e.user, e.t, e.location) for e in ds.wifi],
        "gps.csv": [(e.user, e.t, e.lat, e.lon, e.indoor) for e in ds.gps],
        "activity.csv": [(e.user, e.t, e.state) for e in ds.activity],
        "audio.csv": [(e.user, e.t, e.state) for e in ds.audio],
        "phonestate.csv": [(e.user, e.start, e.end, e.kind) for e in ds.phonestate],
        "comm.csv": [(e.user, e.t, e.kind, e.duration_s) for e in ds.comm],
        "academic.csv": [
            (
                e.user, e.date, e.gpa, e.page_views, e.contributions,
                e.questions, e.notes, e.answers, e.days_to_deadline, e.class_hours,
            )
            for e in ds.academic
        ],
        "ema_stress.csv": [(e.user, e.t, e.level) for e in ds.ema_stress],
        "phq9.csv": [(e.user, e.score) for e in ds.phq9],
    }
    for name, rows in rows_of.items():
        with (out / name).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CANONICAL_SCHEMAS[name])
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    meta = ds.meta
    (out / META_FILE).write_text(
        f"timezone_offset_s={meta.timezone_offset_s}\n"
        f"study_start={meta.study_start.isoformat()}\n"
        f"study_end={meta.study_end.isoformat()}\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# StudentLife adapter
# ---------------------------------------------------------------------------

_SL_TZ_OFFSET_S = -14_400  # US Eastern daylight time, the study's term

_PHQ9_ANSWERS = {
    "not at all": 0,
    "several days": 1,
    "more than half the days": 2,
    "nearly every day": 3,
}


def _sl_user_from_name(path: Path) -> str:
    m = re.search(r"(u\d+)", path.stem)
    return m.group(1) if m else path.stem


def _sl_csv_rows(path: Path, fr: FileReport):
    with path.open(newline="", encoding="utf-8", errors="replace") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            return
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            fr.rows += 1
            yield lineno, dict(zip(header, raw))


def _sl_per_user_files(root: Path, subdir: str) -> list[Path]:
    d = root / subdir
    if not d.is_dir():
        return []
    return sorted(p for p in d.iterdir() if p.suffix in (".csv", ".json"))


def _sl_first_col(row: dict[str, str], *names: str) -> str | None:
    for n in names:
        if n in row and row[n].strip():
            return row[n].strip()
    return None


def _parse_studentlife(root: Path, strict: bool) -> Dataset:
    report = ParseReport()
    streams: dict[str, list] = {name: [] for name in CANONICAL_SCHEMAS}
    found_any = False

    def keep(fr: FileReport, lineno: int, builder):
        nonlocal found_any
        try:
            event = builder()
        except (_RangeViolation, ValueError, KeyError, TypeError) as exc:
            if strict:
                raise SchemaError(fr.path, lineno, str(exc)) from None
            fr.issues.append(RowIssue(fr.path, lineno, str(exc)))
            return
        found_any = True
        fr.kept += 1
        return event

    # wifi_location: time,location
    for path in _sl_per_user_files(root, "sensing/wifi_location"):
        user = _sl_user_from_name(path)
        fr = report.new_file(str(path))
        for lineno, row in _sl_csv_rows(path, fr):
            e = keep(fr, lineno, lambda: WifiScan(
                user, int(float(_sl_first_col(row, "time", "timestamp"))),
                _sl_first_col(row, "location") or _fail("empty location"),
            ))
            if e:
                streams["wifi.csv"].append(e)

    # gps: time,...,latitude,longitude,... (travelstate ignored; indoor unknown)
    for path in _sl_per_user_files(root, "sensing/gps"):
        user = _sl_user_from_name(path)
        fr = report.new_file(str(path))
        for lineno, row in _sl_csv_rows(path, fr):
            def build():
                lat = float(_sl_first_col(row, "latitude", "lat"))
                lon = float(_sl_first_col(row, "longitude", "lon"))
                _need(-90.0 <= lat <= 90.0, f"lat {lat} out of range")
                _need(-180.0 <= lon <= 180.0, f"lon {lon} out of range")
                return GpsFix(user, int(float(_sl_first_col(row, "time", "timestamp"))),
                              lat, lon, None)
            e = keep(fr, lineno, build)
            if e:
                streams["gps.csv"].append(e)

    # activity / audio inferences: integer-coded classes
    for subdir, name, classes in (
        ("sensing/activity", "activity.csv", ACTIVITY_CLASSES),
        ("sensing/audio", "audio.csv", AUDIO_CLASSES),
    ):
        cls = ActivitySample if name == "activity.csv" else AudioSample
        for path in _sl_per_user_files(root, subdir):
            user = _sl_user_from_name(path)
            fr = report.new_file(str(path))
            for lineno, row in _sl_csv_rows(path, fr):
                def build():
                    code = int(_sl_first_col(row, *(k for k in row if "inference" in k), "inference"))
                    _need(0 <= code < len(classes), f"inference code {code} unmapped")
                    return cls(user, int(float(_sl_first_col(row, "timestamp", "time"))),
                               classes[code])
                e = keep(fr, lineno, build)
                if e:
                    streams[name].append(e)

    # phonecharge / phonelock / dark: start,end interval files
    for subdir, kind in (
        ("sensing/phonecharge", "charging"),
        ("sensing/phonelock", "locked"),
        ("sensing/dark", "dark"),
    ):
        for path in _sl_per_user_files(root, subdir):
            user = _sl_user_from_name(path)
            fr = report.new_file(str(path))
            for lineno, row in _sl_csv_rows(path, fr):
                def build():
                    start = int(float(_sl_first_col(row, "start", "start_timestamp")))
                    end = int(float(_sl_first_col(row, "end", "end_timestamp")))
                    _need(start < end, f"start {start} must precede end {end}")
                    return PhoneStateInterval(user, start, end, kind)
                e = keep(fr, lineno, build)
                if e:
                    streams["phonestate.csv"].append(e)

    # communication events
    for subdir, kind in (
        ("sms", "sms"),
        ("call_log", "call"),
        ("app_usage", "app_usage"),
        ("sensing/bluetooth", "bluetooth_contact"),
    ):
        for path in _sl_per_user_files(root, subdir):
            user = _sl_user_from_name(path)
            fr = report.new_file(str(path))
            for lineno, row in _sl_csv_rows(path, fr):
                def build():
                    t = int(float(_sl_first_col(row, "timestamp", "time")))
                    dur = 0
                    if kind == "call":
                        raw = _sl_first_col(row, "duration", "duration_s")
                        dur = max(0, int(float(raw))) if raw else 0
                    return CommEvent(user, t, kind, dur)
                e = keep(fr, lineno, build)
                if e:
                    streams["comm.csv"].append(e)

    # EMA stress responses: JSON files with resp_time + level
    stress_dir = root / "EMA" / "response" / "Stress"
    if stress_dir.is_dir():
        for path in sorted(stress_dir.glob("*.json")):
            user = _sl_user_from_name(path)
            fr = report.new_file(str(path))
            try:
                entries = json.loads(path.read_text(encoding="utf-8", errors="replace"))
            except json.JSONDecodeError as exc:
                if strict:
                    raise SchemaError(str(path), 1, str(exc)) from None
                fr.issues.append(RowIssue(str(path), 1, f"bad json: {exc}"))
                continue
            for i, entry in enumerate(entries if isinstance(entries, list) else []):
                fr.rows += 1
                def build():
                    t = int(float(entry["resp_time"]))
                    level = int(entry["level"])
                    _need(
                        STRESS_LEVEL_MIN <= level <= STRESS_LEVEL_MAX,
                        f"stress level {level} outside [1, 5]",
                    )
                    return EmaStress(user, t, level)
                e = keep(fr, i + 1, build)
                if e:
                    streams["ema_stress.csv"].append(e)

    # PHQ-9 survey: uid,type,item columns with textual answers; prefer "post"
    phq_path = root / "survey" / "PHQ-9.csv"
    if phq_path.exists():
        fr = report.new_file(str(phq_path))
        by_user: dict[str, dict[str, int]] = {}
        for lineno, row in _sl_csv_rows(phq_path, fr):
            def build():
                user = _sl_first_col(row, "uid", "user")
                kind = (_sl_first_col(row, "type") or "post").lower()
                total = 0
                for key, raw in row.items():
                    if key in ("uid", "user", "type"):
                        continue
                    raw = raw.strip().lower()
                    if not raw:
                        continue
                    if raw in _PHQ9_ANSWERS:
                        total += _PHQ9_ANSWERS[raw]
                    else:
                        total += int(raw)
                _need(PHQ9_MIN <= total <= PHQ9_MAX, f"score {total} outside [0, 27]")
                by_user.setdefault(user, {})[kind] = total
                return Phq9Score(user, total)
            keep(fr, lineno, build)
        for user in sorted(by_user):
            scores = by_user[user]
            score = scores.get("post", next(iter(scores.values())))
            streams["phq9.csv"].append(Phq9Score(user, score))

    streams["phonestate.csv"] = merge_intervals(streams["phonestate.csv"])
    if not found_any:
        raise MissingStream(f"no StudentLife streams found under {root}")

    meta = _sl_meta(root, streams)
    ds = _assemble(meta, streams, report)
    ds.academic = _sl_academic(root, report, ds)
    ds.users = _roster({s: getattr(ds, s) for s in Dataset.STREAMS})
    return ds


def _fail(msg: str):
    raise ValueError(msg)


def _sl_meta(root: Path, streams: dict[str, list]) -> DatasetMeta:
    meta_path = root / META_FILE
    if meta_path.exists():
        return _read_meta(meta_path)
    stamps = [e.t for e in streams["ema_stress.csv"]]
    for name in ("wifi.csv", "activity.csv", "audio.csv"):
        stamps.extend(e.t for e in streams[name])
    if not stamps:
        raise MissingStream("cannot infer study range: no timestamped events")
    lo = day_index(to_local(min(stamps), _SL_TZ_OFFSET_S))
    hi = day_index(to_local(max(stamps), _SL_TZ_OFFSET_S))
    from .timeutil import day_to_date

    return DatasetMeta(_SL_TZ_OFFSET_S, day_to_date(lo), day_to_date(hi))


def _sl_academic(root: Path, report: ParseReport, ds: Dataset) -> list[AcademicRecord]:
    """Best-effort academic stream from education/*.

    grades.csv supplies per-user GPA; piazza.csv carries per-user totals that
    are spread evenly across study days; deadlines.csv gives per-day deadline
    counts from which days-to-nearest-deadline is derived.
    """
    edu = root / "education"
    if not edu.is_dir():
        return []
    from .timeutil import date_range

    days = date_range(ds.meta.study_start, ds.meta.study_end)
    n_days = len(days)

    gpa: dict[str, float] = {}
    grades = edu / "grades.csv"
    if grades.exists():
        fr = report.new_file(str(grades))
        for lineno, row in _sl_csv_rows(grades, fr):
            user = _sl_first_col(row, "uid", "user")
            raw = _sl_first_col(row, "gpa all", "gpa")
            if user and raw:
                try:
                    gpa[user] = max(0.0, float(raw))
                    fr.kept += 1
                except ValueError:
                    fr.issues.append(RowIssue(str(grades), lineno, f"bad gpa {raw!r}"))

    piazza: dict[str, dict[str, float]] = {}
    piazza_path = edu / "piazza.csv"
    if piazza_path.exists():
        fr = report.new_file(str(piazza_path))
        for lineno, row in _sl_csv_rows(piazza_path, fr):
            user = _sl_first_col(row, "uid", "user")
            if not user:
                continue
            daily = {}
            for col, key in (
                ("views", "page_views"),
                ("contributions", "contributions"),
                ("questions", "questions"),
                ("notes", "notes"),
                ("answers", "answers"),
            ):
                raw = _sl_first_col(row, col)
                try:
                    daily[key] = float(raw) / n_days if raw else 0.0
                except ValueError:
                    daily[key] = 0.0
            piazza[user] = daily
            fr.kept += 1

    deadline_days: dict[str, set[int]] = {}
    deadlines = edu / "deadlines.csv"
    if deadlines.exists():
        fr = report.new_file(str(deadlines))
        for lineno, row in _sl_csv_rows(deadlines, fr):
            user = _sl_first_col(row, "uid", "user")
            if not user:
                continue
            hits = set()
            for col, raw in row.items():
                raw = raw.strip()
                if not raw or col in ("uid", "user"):
                    continue
                try:
                    when = date.fromisoformat(col)
                    if int(float(raw)) > 0:
                        hits.add((when - ds.meta.study_start).days)
                except ValueError:
                    continue
            deadline_days[user] = hits
            fr.kept += 1

    users = sorted(set(gpa) | set(piazza) | set(deadline_days) | set(ds.users))
    records = []
    for user in users:
        hits = sorted(deadline_days.get(user, set()))
        p = piazza.get(user, {})
        for i, d in enumerate(days):
            upcoming = [h - i for h in hits if h >= i]
            dtd = min(upcoming) if upcoming else n_days
            records.append(
                AcademicRecord(
                    user, d, gpa.get(user, 0.0),
                    int(round(p.get("page_views", 0.0))),
                    int(round(p.get("contributions", 0.0))),
                    int(round(p.get("questions", 0.0))),
                    int(round(p.get("notes", 0.0))),
                    int(round(p.get("answers", 0.0))),
                    dtd, 2.0 if d.weekday() < 5 else 0.0, d.weekday(),
                )
            )
    records.sort()
    return records
