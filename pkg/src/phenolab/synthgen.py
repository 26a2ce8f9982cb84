"""Deterministic synthetic canonical datasets with a controllable planted signal.

Each user carries a latent daily stress level s (bounded random walk on 1-5).
EMA responses are noisy samples of s and the PHQ-9 score is a monotone
function of the user's mean s. With ``planted_group="wifi"`` the probability
of scanning the user's home location rises with s, so the signal must survive
the real WiFi extractors (dwell times, distinct-location counts); every other
stream is generated independently of s. The latent walk itself is never
written out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .ingest import CANONICAL_SCHEMAS, META_FILE
from .timeutil import SECONDS_PER_DAY, date_to_day

STUDY_START = date(2013, 4, 1)

WIFI_STEP_S = 600
ACTIVITY_STEP_S = 900
AUDIO_STEP_S = 900
GPS_STEP_S = 1800

N_SHARED_LOCATIONS = 12
BASE_HOME_PROB = 0.45
HOME_PROB_PER_LEVEL = 0.12  # scaled by effect_size and (s - 3)

CAMPUS_LAT, CAMPUS_LON = 43.70, -72.29


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 48
    n_days: int = 70
    seed: int = 0
    planted_group: str | None = None  # None or "wifi"
    effect_size: float = 0.0
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_users < 1 or self.n_days < 1:
            raise ValueError("n_users and n_days must be >= 1")
        if self.planted_group not in (None, "wifi"):
            raise ValueError("only WiFi planting is implemented")
        if self.effect_size < 0 or self.noise_scale <= 0:
            raise ValueError("effect_size must be >= 0 and noise_scale > 0")


class _Writers:
    def __init__(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        self._handles = {}
        self.rows = {}
        for name, schema in CANONICAL_SCHEMAS.items():
            fh = (out / name).open("w", newline="", encoding="utf-8")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(schema)
            self._handles[name] = fh
            self.rows[name] = w

    def close(self) -> None:
        for fh in self._handles.values():
            fh.close()


def _latent_walk(rng: np.random.Generator, n_days: int) -> np.ndarray:
    s = np.zeros(n_days, dtype=np.int64)
    s[0] = rng.integers(1, 6)
    steps = rng.choice([-1, 0, 1], size=n_days, p=[0.25, 0.5, 0.25])
    for i in range(1, n_days):
        s[i] = min(5, max(1, s[i - 1] + steps[i]))
    return s


def _unique_times(rng: np.random.Generator, n: int, lo: int, hi: int) -> np.ndarray:
    """n distinct second offsets in [lo, hi), sorted."""
    n = min(n, hi - lo)
    return np.sort(rng.choice(hi - lo, size=n, replace=False) + lo)


def generate(config: SynthConfig, out_dir) -> Path:
    """Write a canonical dataset directory; byte-identical for equal configs."""
    out = Path(out_dir)
    w = _Writers(out)
    try:
        _generate_into(config, w)
    finally:
        w.close()
    end = STUDY_START + timedelta(days=config.n_days - 1)
    (out / META_FILE).write_text(
        "timezone_offset_s=0\n"
        f"study_start={STUDY_START.isoformat()}\n"
        f"study_end={end.isoformat()}\n",
        encoding="utf-8",
    )
    return out


def _generate_into(config: SynthConfig, w: _Writers) -> None:
    shared = [f"ap{i:02d}" for i in range(N_SHARED_LOCATIONS)]
    children = np.random.SeedSequence(config.seed).spawn(config.n_users)
    width = max(2, len(str(config.n_users - 1)))
    plant_wifi = config.planted_group == "wifi" and config.effect_size > 0

    for u in range(config.n_users):
        user = f"u{u:0{width}d}"
        rng = np.random.default_rng(children[u])
        home = f"home_{user}"
        favorites = list(rng.choice(shared, size=3, replace=False))
        others = [ap for ap in shared if ap not in favorites]
        gpa = float(rng.uniform(2.0, 4.0))
        s = _latent_walk(rng, config.n_days)

        for i in range(config.n_days):
            day = STUDY_START + timedelta(days=i)
            day_start = date_to_day(day) * SECONDS_PER_DAY
            level = int(s[i])

            # --- wifi: fixed cadence, per-scan location choice -----------
            if plant_wifi:
                p_home = BASE_HOME_PROB + (
                    HOME_PROB_PER_LEVEL * config.effect_size * (level - 3)
                )
                p_home = min(0.97, max(0.02, p_home))
            else:
                p_home = BASE_HOME_PROB
            rest = 1.0 - p_home
            locations = [home] + favorites + others
            probs = np.array(
                [p_home, rest * 0.45, rest * 0.27, rest * 0.18]
                + [rest * 0.10 / len(others)] * len(others)
            )
            probs = probs / probs.sum()
            picks = rng.choice(len(locations), size=SECONDS_PER_DAY // WIFI_STEP_S, p=probs)
            for k, pick in enumerate(picks):
                w.rows["wifi.csv"].writerow(
                    [user, day_start + k * WIFI_STEP_S, locations[pick]]
                )

            # --- gps: random walk around campus --------------------------
            n_fix = SECONDS_PER_DAY // GPS_STEP_S
            lat = CAMPUS_LAT + rng.normal(0, 0.002)
            lon = CAMPUS_LON + rng.normal(0, 0.002)
            for k in range(n_fix):
                lat += rng.normal(0, 0.0008)
                lon += rng.normal(0, 0.0008)
                roll = rng.random()
                indoor = "" if roll < 0.1 else ("1" if roll < 0.7 else "0")
                w.rows["gps.csv"].writerow(
                    [user, day_start + k * GPS_STEP_S, repr(lat), repr(lon), indoor]
                )

            # --- activity / audio: iid sampled states --------------------
            acts = rng.choice(
                ["stationary", "walking", "running", "unknown"],
                size=SECONDS_PER_DAY // ACTIVITY_STEP_S,
                p=[0.6, 0.25, 0.05, 0.1],
            )
            for k, st in enumerate(acts):
                w.rows["activity.csv"].writerow([user, day_start + k * ACTIVITY_STEP_S, st])
            auds = rng.choice(
                ["silence", "voice", "noise"],
                size=SECONDS_PER_DAY // AUDIO_STEP_S,
                p=[0.5, 0.3, 0.2],
            )
            for k, st in enumerate(auds):
                w.rows["audio.csv"].writerow([user, day_start + k * AUDIO_STEP_S, st])

            # --- phone state ---------------------------------------------
            charge_start = day_start + int(rng.integers(22 * 3600, 24 * 3600))
            charge_len = int(rng.integers(5 * 3600, 9 * 3600))
            w.rows["phonestate.csv"].writerow(
                [user, charge_start, charge_start + charge_len, "charging"]
            )
            n_lock = int(rng.integers(4, 9))
            starts = _unique_times(rng, n_lock, 0, SECONDS_PER_DAY - 3700)
            for st in starts:
                dur = int(rng.integers(300, 3600))
                w.rows["phonestate.csv"].writerow(
                    [user, day_start + int(st), day_start + int(st) + dur, "locked"]
                )
            dark_start = day_start + int(rng.integers(22 * 3600, 23 * 3600))
            dark_len = int(rng.integers(7 * 3600, 9 * 3600))
            w.rows["phonestate.csv"].writerow(
                [user, dark_start, dark_start + dark_len, "dark"]
            )

            # --- communication --------------------------------------------
            counts = {
                "sms": rng.poisson(6),
                "call": rng.poisson(2),
                "app_usage": rng.poisson(20),
                "bluetooth_contact": rng.poisson(8),
            }
            for kind in ("sms", "call", "app_usage", "bluetooth_contact"):
                n = int(counts[kind])
                if n == 0:
                    continue
                times = _unique_times(rng, n, 7 * 3600, SECONDS_PER_DAY)
                for t in times:
                    dur = int(rng.integers(20, 900)) if kind == "call" else 0
                    w.rows["comm.csv"].writerow([user, day_start + int(t), kind, dur])

            # --- academic ---------------------------------------------------
            next_deadline = ((i // 10) + 1) * 10 - 1
            dtd = max(0, next_deadline - i)
            class_hours = float(rng.integers(2, 7)) if day.weekday() < 5 else 0.0
            w.rows["academic.csv"].writerow(
                [
                    user, day.isoformat(), repr(gpa),
                    int(rng.poisson(15)), int(rng.poisson(2)), int(rng.poisson(1)),
                    int(rng.poisson(1)), int(rng.poisson(1)), dtd, repr(class_hours),
                ]
            )

            # --- EMA stress responses (sample s with noise) ---------------
            n_resp = 1 if rng.random() < 0.95 else 0
            if rng.random() < 0.10:
                n_resp += 1
            if n_resp:
                times = _unique_times(rng, n_resp, 10 * 3600, 22 * 3600)
                for t in times:
                    delta = int(rng.choice([-1, 0, 1], p=[0.15, 0.7, 0.15]))
                    resp = min(5, max(1, level + delta))
                    w.rows["ema_stress.csv"].writerow([user, day_start + int(t), resp])

        # --- PHQ-9: monotone in mean latent stress + noise ----------------
        mean_s = float(np.mean(s))
        score = 27.0 * (mean_s - 1.0) / 4.0 + rng.normal(0.0, 2.0 * config.noise_scale)
        score = int(min(27, max(0, round(score))))
        w.rows["phq9.csv"].writerow([user, score])
