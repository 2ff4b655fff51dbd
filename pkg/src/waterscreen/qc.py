"""Real-time screening of incoming field records.

Rules are grouped into seven domains (record integrity, sample ID
traceability, GPS and spatial validity, survey duration, photo completeness,
logical consistency, parameter plausibility) and each carries a fixed
severity. A record's triage category follows from the triggered set alone:
any alert-severity rule makes it ALERT, anything else triggered makes it
REVIEW, an empty set is OK. Severities encode one judgment: faults that make
the record untrustworthy as a data point (identity, impossible values,
impossible timelines) alert; protocol deviations a field team can follow up
on review.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ParameterError
from .records import DEFAULT_BOUNDS, MEASUREMENT_FIELDS, FieldRecord

CATEGORY_OK = "OK"
CATEGORY_REVIEW = "REVIEW"
CATEGORY_ALERT = "ALERT"

SEVERITY_REVIEW = "review"
SEVERITY_ALERT = "alert"

DOMAIN_RECORD_INTEGRITY = "record_integrity"
DOMAIN_SAMPLE_ID = "sample_id"
DOMAIN_GPS = "gps"
DOMAIN_DURATION = "duration"
DOMAIN_PHOTOS = "photos"
DOMAIN_LOGIC = "logic"
DOMAIN_PLAUSIBILITY = "plausibility"

DOMAINS = (
    DOMAIN_RECORD_INTEGRITY,
    DOMAIN_SAMPLE_ID,
    DOMAIN_GPS,
    DOMAIN_DURATION,
    DOMAIN_PHOTOS,
    DOMAIN_LOGIC,
    DOMAIN_PLAUSIBILITY,
)

GPS_ACCURACY_LIMIT_M = 30.0
HOUSEHOLD_MIN_DURATION_S = 180.0
WATER_BODY_MIN_DURATION_S = 60.0


@dataclass(frozen=True)
class QcRule:
    code: str
    domain: str
    severity: str


RULES = (
    QcRule("MISSING_UUID", DOMAIN_RECORD_INTEGRITY, SEVERITY_ALERT),
    QcRule("DUPLICATE_UUID", DOMAIN_RECORD_INTEGRITY, SEVERITY_ALERT),
    QcRule("BATCH_FILLING", DOMAIN_RECORD_INTEGRITY, SEVERITY_REVIEW),
    QcRule("MISSING_SAMPLE_ID", DOMAIN_SAMPLE_ID, SEVERITY_ALERT),
    QcRule("GPS_MISSING", DOMAIN_GPS, SEVERITY_REVIEW),
    QcRule("GPS_LOW_ACCURACY", DOMAIN_GPS, SEVERITY_REVIEW),
    QcRule("SPATIAL_CLUSTER", DOMAIN_GPS, SEVERITY_REVIEW),
    QcRule("DURATION_SHORT", DOMAIN_DURATION, SEVERITY_REVIEW),
    QcRule("PHOTOS_INCOMPLETE", DOMAIN_PHOTOS, SEVERITY_REVIEW),
    QcRule("TIME_REVERSED", DOMAIN_LOGIC, SEVERITY_ALERT),
    QcRule("VALUE_OUT_OF_RANGE", DOMAIN_PLAUSIBILITY, SEVERITY_ALERT),
)

RULES_BY_CODE = {rule.code: rule for rule in RULES}


@dataclass
class QcVerdict:
    uuid: str
    category: str
    triggered: list[str]


@dataclass
class BatchFlags:
    """How many verdicts carry each rule code (absent codes never fired)."""

    counts: dict[str, int] = field(default_factory=dict)


@dataclass
class BatchConfig:
    batch_min: int = 5
    batch_gap_s: float = 60.0
    cluster_min: int = 5
    cluster_radius_m: float = 10.0
    apply_batch_rules: bool = True


class UuidRegistry:
    """Insert-only set of accepted uuids; queries never mutate."""

    def __init__(self):
        self.seen: set[str] = set()

    def __contains__(self, uuid: str) -> bool:
        return uuid in self.seen


def register_uuid(registry: UuidRegistry, uuid: str) -> bool:
    """Insert uuid if novel; False (and no mutation) when already present."""
    if uuid == "":
        raise ParameterError("cannot register an empty uuid")
    if uuid in registry.seen:
        return False
    registry.seen.add(uuid)
    return True


def categorize(triggered: list[str]) -> str:
    """Triage category as a pure function of the triggered rule set."""
    if any(RULES_BY_CODE[code].severity == SEVERITY_ALERT for code in triggered):
        return CATEGORY_ALERT
    if triggered:
        return CATEGORY_REVIEW
    return CATEGORY_OK


def evaluate_record(record: FieldRecord, registry: UuidRegistry,
                    bounds: dict[str, tuple[float, float]] | None = None) -> QcVerdict:
    """Screen one record against every per-record rule and update the registry.

    Duration rules are skipped when timestamps are absent or reversed (the
    reversal itself alerts); plausibility fires once no matter how many
    measurements are out of range.
    """
    if bounds is None:
        bounds = DEFAULT_BOUNDS
    triggered: list[str] = []

    if record.uuid == "":
        triggered.append("MISSING_UUID")
    elif not register_uuid(registry, record.uuid):
        triggered.append("DUPLICATE_UUID")

    if record.sample_id == "":
        triggered.append("MISSING_SAMPLE_ID")

    if record.latitude is None or record.longitude is None:
        triggered.append("GPS_MISSING")
    if record.gps_accuracy_m is not None and record.gps_accuracy_m > GPS_ACCURACY_LIMIT_M:
        triggered.append("GPS_LOW_ACCURACY")

    duration = record.duration_s
    if duration is not None and duration < 0:
        triggered.append("TIME_REVERSED")
    elif duration is not None:
        limit = (
            HOUSEHOLD_MIN_DURATION_S
            if record.survey_kind == "household"
            else WATER_BODY_MIN_DURATION_S
        )
        if duration < limit:
            triggered.append("DURATION_SHORT")

    if record.photo_count < record.expected_photo_count:
        triggered.append("PHOTOS_INCOMPLETE")

    for name in MEASUREMENT_FIELDS:
        value = getattr(record, name)
        if value is None or name not in bounds:
            continue
        low, high = bounds[name]
        if not low <= value <= high:
            triggered.append("VALUE_OUT_OF_RANGE")
            break

    return QcVerdict(uuid=record.uuid, category=categorize(triggered), triggered=triggered)


def _haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    radius = 6371000.0
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(a))


def _batch_filling_rows(records: list[FieldRecord], config: BatchConfig) -> set[int]:
    """Indices in runs of >= batch_min same-collector submissions with every
    inter-submission gap under batch_gap_s. Records without a start time or
    collector are invisible to this rule."""
    by_collector: dict[str, list[int]] = {}
    for i, record in enumerate(records):
        if record.collector_id and record.started_at is not None:
            by_collector.setdefault(record.collector_id, []).append(i)
    flagged: set[int] = set()
    for indices in by_collector.values():
        indices.sort(key=lambda i: records[i].started_at)
        run = [indices[0]] if indices else []
        for i in indices[1:]:
            gap = (records[i].started_at - records[run[-1]].started_at).total_seconds()
            if gap < config.batch_gap_s:
                run.append(i)
            else:
                if len(run) >= config.batch_min:
                    flagged.update(run)
                run = [i]
        if len(run) >= config.batch_min:
            flagged.update(run)
    return flagged


def _cluster_rows(records: list[FieldRecord], config: BatchConfig) -> set[int]:
    """Indices of household records in single-linkage groups of >= cluster_min
    within cluster_radius_m."""
    located = [
        i
        for i, record in enumerate(records)
        if record.survey_kind == "household"
        and record.latitude is not None
        and record.longitude is not None
    ]
    parent = {i: i for i in located}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a_pos, i in enumerate(located):
        for j in located[a_pos + 1:]:
            d = _haversine_m(
                records[i].latitude, records[i].longitude,
                records[j].latitude, records[j].longitude,
            )
            if d <= config.cluster_radius_m:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in located:
        groups.setdefault(find(i), []).append(i)
    flagged: set[int] = set()
    for members in groups.values():
        if len(members) >= config.cluster_min:
            flagged.update(members)
    return flagged


def evaluate_batch(records: list[FieldRecord],
                   config: BatchConfig | None = None) -> tuple[list[QcVerdict], BatchFlags]:
    """Per-record screening over a shared registry, then batch anomaly rules.

    With apply_batch_rules False this is exactly the per-record mapping.
    """
    if config is None:
        config = BatchConfig()
    registry = UuidRegistry()
    verdicts = [evaluate_record(record, registry) for record in records]

    if config.apply_batch_rules:
        for i in _batch_filling_rows(records, config):
            verdicts[i].triggered.append("BATCH_FILLING")
        for i in _cluster_rows(records, config):
            verdicts[i].triggered.append("SPATIAL_CLUSTER")
        verdicts = [
            replace(v, category=categorize(v.triggered)) for v in verdicts
        ]

    counts: dict[str, int] = {}
    for verdict in verdicts:
        for code in verdict.triggered:
            counts[code] = counts.get(code, 0) + 1
    return verdicts, BatchFlags(counts=counts)
