"""Feature registry: named, group-tagged, period-tagged daily feature slots.

The registry pins the column order of every feature matrix. Group sizes are
checked against a manifest (default targets: wifi=36, gps=30, social=9,
phonelog=14, activity=12, audio=9, academic=13, total 123) so that the
ablation grid always slices well-defined column blocks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import RegistryMismatch

GROUPS = ("wifi", "gps", "social", "phonelog", "activity", "audio", "academic")

GROUP_DISPLAY = {
    "wifi": "WiFi",
    "gps": "GPS",
    "social": "Social",
    "phonelog": "Phone log",
    "activity": "Activity",
    "audio": "Audio",
    "academic": "Academic",
}

DEFAULT_GROUP_SIZES = {
    "wifi": 36,
    "gps": 30,
    "social": 9,
    "phonelog": 14,
    "activity": 12,
    "audio": 9,
    "academic": 13,
}

PERIOD_NAMES = ("night", "day", "evening")  # wall-clock order


@dataclass(frozen=True)
class FeatureDef:
    name: str
    group: str  # one of GROUPS
    period: str  # night | day | evening | daily
    index: int


class FeatureRegistry:
    """Ordered feature definitions with unique names and contiguous indices."""

    def __init__(self, defs: list[FeatureDef], expected_sizes: dict[str, int] | None = None):
        names = [d.name for d in defs]
        if len(set(names)) != len(names):
            raise RegistryMismatch("duplicate feature names in registry")
        for i, d in enumerate(defs):
            if d.index != i:
                raise RegistryMismatch(
                    f"indices not contiguous: {d.name} has index {d.index}, expected {i}"
                )
            if d.group not in GROUPS:
                raise RegistryMismatch(f"unknown group {d.group!r} for {d.name}")
            if d.period not in PERIOD_NAMES + ("daily",):
                raise RegistryMismatch(f"unknown period {d.period!r} for {d.name}")
        self.defs = list(defs)
        sizes = self.group_sizes()
        expected = expected_sizes if expected_sizes is not None else DEFAULT_GROUP_SIZES
        if expected:
            for group, want in expected.items():
                got = sizes.get(group, 0)
                if got != want:
                    raise RegistryMismatch(
                        f"group {group!r} has {got} features, manifest expects {want}"
                    )

    def __len__(self) -> int:
        return len(self.defs)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.defs]

    def group_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for d in self.defs:
            sizes[d.group] = sizes.get(d.group, 0) + 1
        return sizes

    def group_indices(self, group: str) -> list[int]:
        if group not in GROUPS:
            raise KeyError(f"unknown feature group {group!r}")
        return [d.index for d in self.defs if d.group == group]

    def sha(self) -> str:
        payload = "\n".join(f"{d.name},{d.group},{d.period}" for d in self.defs)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    # -- manifest round trip ------------------------------------------------

    def dump_manifest(self, path) -> None:
        lines = [f"{d.name},{d.group},{d.period}" for d in self.defs]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_manifest(cls, path, check_default_sizes: bool = False) -> "FeatureRegistry":
        defs = []
        for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise RegistryMismatch(f"{path}: bad manifest line {line!r}")
            name, group, period = (p.strip() for p in parts)
            defs.append(FeatureDef(name, group, period, len(defs)))
        expected = DEFAULT_GROUP_SIZES if check_default_sizes else {}
        return cls(defs, expected_sizes=expected)


def _period_block(group: str, period: str, metrics: list[str], defs: list[FeatureDef]) -> None:
    for metric in metrics:
        defs.append(FeatureDef(f"{group}_{period}_{metric}", group, period, len(defs)))


def default_registry() -> FeatureRegistry:
    """The default 123-column registry matching the per-group decompositions."""
    defs: list[FeatureDef] = []

    wifi_metrics = (
        ["n_locations", "dwell_var"]
        + [f"user_top{i}_s" for i in (1, 2, 3)]
        + [f"global_top{i}_s" for i in range(1, 8)]
    )
    for period in PERIOD_NAMES:
        _period_block("wifi", period, wifi_metrics, defs)

    gps_metrics = [
        "max_step_km",
        "total_dist_km",
        "step_var",
        "mean_speed",
        "speed_var",
        "hull_area_km2",
        "indoor_s",
        "outdoor_s",
        "n_fixes",
        "frac_moving",
    ]
    for period in PERIOD_NAMES:
        _period_block("gps", period, gps_metrics, defs)

    for period in PERIOD_NAMES:
        _period_block("social", period, ["comm_count", "ambient_count", "call_s"], defs)

    for period in PERIOD_NAMES:
        _period_block("phonelog", period, ["charge_s", "lock_s", "dark_s"], defs)
    for metric in ("charge_s", "lock_s", "dark_s", "charge_sessions", "lock_sessions"):
        defs.append(FeatureDef(f"phonelog_daily_{metric}", "phonelog", "daily", len(defs)))

    for period in PERIOD_NAMES:
        _period_block(
            "activity", period,
            [f"{s}_s" for s in ("stationary", "walking", "running", "unknown")], defs,
        )

    for period in PERIOD_NAMES:
        _period_block("audio", period, [f"{s}_s" for s in ("silence", "voice", "noise")], defs)

    for metric in (
        "gpa",
        "page_views",
        "contributions",
        "questions",
        "notes",
        "answers",
        "days_to_deadline",
        "class_hours",
        "dow_mon_thu",
        "dow_fri",
        "dow_sat",
        "dow_sun",
        "deadline_day",
    ):
        defs.append(FeatureDef(f"academic_{metric}", "academic", "daily", len(defs)))

    return FeatureRegistry(defs)
