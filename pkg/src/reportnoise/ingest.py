"""Report-event and labelled-content ingestion, per-item feature aggregation,
quantile outlier clipping and balanced sample construction."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .taxonomy import GcrcClass, VerificationFlag

SECONDS_PER_DAY = 86_400
PLATFORMS = ("FB", "IG")
COUNTRIES = ("FR", "UK", "US")
GENDERS = ("F", "M", "Other")


class ReportCategory(str, Enum):
    FalseNews = "false_news"
    NuditySexualSolicitation = "nudity_sexual_solicitation"
    Violence = "violence"
    Harassment = "harassment"
    SuicideInjury = "suicide_injury"
    Spam = "spam"
    HateSpeech = "hate_speech"
    UnauthorisedSales = "unauthorised_sales"
    InappropriateContent = "inappropriate_content"
    IDontLikeIt = "i_dont_like_it"

    def __str__(self) -> str:
        return self.value


CATEGORIES: tuple[ReportCategory, ...] = tuple(ReportCategory)
CATEGORY_INDEX = {c: i for i, c in enumerate(CATEGORIES)}
N_CATEGORIES = len(CATEGORIES)


class IngestError(ValueError):
    """Base class for data errors raised while reading inputs."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MalformedRecord(IngestError):
    pass


class UnknownCategory(IngestError):
    def __init__(self, line: int, value):
        self.value = value
        super().__init__(line, f"unknown category {value!r}")


class UnknownCountry(IngestError):
    def __init__(self, line: int, value):
        self.value = value
        super().__init__(line, f"unknown country {value!r}")


class UnknownPlatform(IngestError):
    def __init__(self, line: int, value):
        self.value = value
        super().__init__(line, f"unknown platform {value!r}")


class EmptyInput(ValueError):
    pass


class InsufficientRecords(ValueError):
    pass


class MissingMau(KeyError):
    def __init__(self, country: str):
        self.country = country
        super().__init__(f"no monthly active users given for country {country!r}")


@dataclass(frozen=True, slots=True)
class ReportEvent:
    report_id: str
    content_id: str
    reporter_id: str
    platform: str
    country: str
    category: ReportCategory
    timestamp: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "report_id": self.report_id,
                "content_id": self.content_id,
                "reporter_id": self.reporter_id,
                "platform": self.platform,
                "country": self.country,
                "category": self.category.value,
                "ts": self.timestamp,
            },
            separators=(",", ":"),
        )


@dataclass(frozen=True, slots=True)
class ContentRecord:
    content_id: str
    platform: str
    country: str
    gcrc: GcrcClass | None = None
    verification: VerificationFlag = VerificationFlag.NONE
    reporter_gender: str | None = None
    reporter_age_band: str | None = None

    def __post_init__(self):
        if self.verification is not VerificationFlag.NONE and self.gcrc is None:
            raise ValueError(
                f"{self.content_id}: verification flag {self.verification.value} "
                "on an unlabelled record"
            )

    @property
    def labelled(self) -> bool:
        return self.gcrc is not None


@dataclass(frozen=True, slots=True)
class FeatureVector:
    content_id: str
    counts: tuple[int, ...]
    window_days: int = 90

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __getitem__(self, category: ReportCategory) -> int:
        return self.counts[CATEGORY_INDEX[ReportCategory(category)]]

    def merge(self, other: "FeatureVector") -> "FeatureVector":
        if other.content_id != self.content_id:
            raise ValueError("cannot merge vectors of different content items")
        return FeatureVector(
            self.content_id,
            tuple(a + b for a, b in zip(self.counts, other.counts)),
            self.window_days,
        )


# --------------------------------------------------------------------------
# parsing


def _require_str(obj: dict, key: str, line: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise MalformedRecord(line, f"missing or empty {key!r}")
    return value


def parse_event_line(text: str, line: int) -> ReportEvent:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "record is not a JSON object")

    report_id = _require_str(obj, "report_id", line)
    content_id = _require_str(obj, "content_id", line)
    reporter_id = _require_str(obj, "reporter_id", line)

    platform = obj.get("platform")
    if platform not in PLATFORMS:
        raise UnknownPlatform(line, platform)
    country = obj.get("country")
    if country not in COUNTRIES:
        raise UnknownCountry(line, country)
    try:
        category = ReportCategory(obj.get("category"))
    except ValueError:
        raise UnknownCategory(line, obj.get("category")) from None

    ts = obj.get("ts")
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedRecord(line, "'ts' must be an integer number of seconds")
    if ts < 0:
        raise MalformedRecord(line, "'ts' must be non-negative")
    return ReportEvent(report_id, content_id, reporter_id, platform, country, category, ts)


def iter_events(stream: IO[str] | IO[bytes] | Iterable[str]) -> Iterator[ReportEvent]:
    """Yield events from a JSONL stream in input order; blank lines are skipped."""
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        yield parse_event_line(raw, lineno)


def parse_events(stream) -> list[ReportEvent]:
    return list(iter_events(stream))


def read_events(path) -> list[ReportEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh)


def write_events(events: Iterable[ReportEvent], fh: IO[str]) -> None:
    for ev in events:
        fh.write(ev.to_json())
        fh.write("\n")


CONTENT_HEADER = ("content_id", "platform", "country", "gcrc", "verification", "gender", "age_band")


def parse_contents(fh: IO[str]) -> list[ContentRecord]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        return []
    missing = [h for h in CONTENT_HEADER if h not in reader.fieldnames]
    if missing:
        raise MalformedRecord(1, f"missing columns {missing}")
    out = []
    # header is line 1
    for lineno, row in enumerate(reader, start=2):
        cid = (row["content_id"] or "").strip()
        if not cid:
            raise MalformedRecord(lineno, "empty content_id")
        platform = row["platform"]
        if platform not in PLATFORMS:
            raise UnknownPlatform(lineno, platform)
        country = row["country"]
        if country not in COUNTRIES:
            raise UnknownCountry(lineno, country)
        try:
            gcrc = GcrcClass.parse(row["gcrc"]) if row["gcrc"] else None
            flag = VerificationFlag.parse(row["verification"])
            rec = ContentRecord(
                cid,
                platform,
                country,
                gcrc,
                flag,
                row["gender"] or None,
                row["age_band"] or None,
            )
        except ValueError as exc:
            raise MalformedRecord(lineno, str(exc)) from None
        out.append(rec)
    return out


def read_contents(path) -> list[ContentRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_contents(fh)


def write_contents(records: Iterable[ContentRecord], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CONTENT_HEADER)
    for r in records:
        w.writerow(
            [
                r.content_id,
                r.platform,
                r.country,
                r.gcrc.value if r.gcrc is not None else "",
                r.verification.value,
                r.reporter_gender or "",
                r.reporter_age_band or "",
            ]
        )


FEATURE_HEADER = ("content_id", *(c.value for c in CATEGORIES), "total")


def write_features(vectors: Iterable[FeatureVector], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FEATURE_HEADER)
    for v in vectors:
        w.writerow([v.content_id, *v.counts, v.total])


def parse_features(fh: IO[str], window_days: int = 90) -> list[FeatureVector]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != FEATURE_HEADER:
        raise MalformedRecord(1, "unexpected feature header")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(FEATURE_HEADER):
            raise MalformedRecord(lineno, f"expected {len(FEATURE_HEADER)} fields, got {len(row)}")
        try:
            counts = tuple(int(x) for x in row[1:-1])
            total = int(row[-1])
        except ValueError:
            raise MalformedRecord(lineno, "non-integer count") from None
        if any(c < 0 for c in counts):
            raise MalformedRecord(lineno, "negative count")
        if total != sum(counts):
            raise MalformedRecord(lineno, "total does not equal the sum of counts")
        out.append(FeatureVector(row[0], counts, window_days))
    return out


def read_features(path, window_days: int = 90) -> list[FeatureVector]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_features(fh, window_days)


# --------------------------------------------------------------------------
# aggregation


def dedupe_reports(events: Iterable[ReportEvent]) -> list[ReportEvent]:
    """One event per report_id.

    Conflicting duplicates keep the smallest event by field order, so the
    result does not depend on stream order.
    """
    best: dict[str, ReportEvent] = {}
    for ev in events:
        cur = best.get(ev.report_id)
        if cur is None or _event_key(ev) < _event_key(cur):
            best[ev.report_id] = ev
    return list(best.values())


def _event_key(ev: ReportEvent):
    return (ev.content_id, ev.reporter_id, ev.platform, ev.country, ev.category.value, ev.timestamp)


def aggregate_features(
    events: Iterable[ReportEvent],
    window: tuple[int, int],
    window_days: int | None = None,
) -> dict[str, FeatureVector]:
    """Count in-window reports per content item and category.

    The window is half-open, ``start <= ts < end``. Duplicate report ids are
    counted once.
    """
    start, end = window
    if end < start:
        raise ValueError("window end precedes start")
    if window_days is None:
        window_days = max(1, math.ceil((end - start) / SECONDS_PER_DAY))
    counts: dict[str, list[int]] = defaultdict(lambda: [0] * N_CATEGORIES)
    for ev in dedupe_reports(events):
        if start <= ev.timestamp < end:
            counts[ev.content_id][CATEGORY_INDEX[ev.category]] += 1
    return {
        cid: FeatureVector(cid, tuple(c), window_days) for cid, c in sorted(counts.items())
    }


def merge_feature_maps(*maps: Mapping[str, FeatureVector]) -> dict[str, FeatureVector]:
    """Sum feature maps built from disjoint event partitions."""
    out: dict[str, FeatureVector] = {}
    for m in maps:
        for cid, vec in m.items():
            out[cid] = out[cid].merge(vec) if cid in out else vec
    return dict(sorted(out.items()))


# --------------------------------------------------------------------------
# outlier clipping


def nearest_rank_quantile(values: Sequence[float], q: float) -> float:
    """The ceil(q*n)-th smallest value (1-based)."""
    if not values:
        raise EmptyInput("quantile of an empty collection")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must lie in (0, 1], got {q}")
    ordered = sorted(values)
    # guard against q*n landing a hair above an integer through rounding
    rank = max(1, math.ceil(q * len(ordered) - 1e-9))
    return ordered[rank - 1]


@dataclass
class ClipResult:
    kept: list[FeatureVector]
    excluded: list[FeatureVector]
    threshold: int

    def __iter__(self):
        return iter((self.kept, self.excluded))


def clip_outliers(vectors: Iterable[FeatureVector], q: float = 0.999) -> ClipResult:
    """Split off vectors whose total lies strictly above the q-quantile of totals."""
    vectors = list(vectors)
    if not vectors:
        raise EmptyInput("no feature vectors to clip")
    threshold = nearest_rank_quantile([v.total for v in vectors], q)
    kept, excluded = [], []
    for v in vectors:
        (excluded if v.total > threshold else kept).append(v)
    return ClipResult(kept, excluded, threshold)


# --------------------------------------------------------------------------
# reporting rates


def reporting_rate(
    events: Iterable[ReportEvent], mau_per_country: Mapping[str, int]
) -> dict[str, float]:
    """Distinct reported items per thousand monthly active users, by country."""
    distinct: dict[str, set[str]] = defaultdict(set)
    for ev in events:
        distinct[ev.country].add(ev.content_id)
    for country in distinct:
        if country not in mau_per_country:
            raise MissingMau(country)
    rates = {}
    for country in sorted(set(mau_per_country) | set(distinct)):
        mau = mau_per_country[country]
        if mau <= 0:
            raise ValueError(f"monthly active users for {country} must be positive")
        rates[country] = 1000.0 * len(distinct.get(country, ())) / mau
    return rates


# --------------------------------------------------------------------------
# balanced sample construction


def _allocate_balanced(capacity: Mapping[tuple, int], target: int) -> dict[tuple, int]:
    """Split ``target`` as evenly as possible over cells, capped by capacity.

    Each round hands every unsaturated cell an equal share of what is left,
    remainders going to the largest fractional parts (ties by cell order).
    """
    alloc = {k: 0 for k in capacity}
    remaining = target
    while remaining > 0:
        open_cells = sorted(k for k in capacity if alloc[k] < capacity[k])
        if not open_cells:
            break
        share = remaining / len(open_cells)
        base = {k: min(int(share), capacity[k] - alloc[k]) for k in open_cells}
        given = sum(base.values())
        fracs = sorted(open_cells, key=lambda k: (-(share - int(share)), k))
        if given == 0:
            # share < 1: one item each to the first `remaining` cells
            for k in fracs[:remaining]:
                base[k] = 1
            given = sum(base.values())
        for k, b in base.items():
            alloc[k] += b
        remaining -= given
    return alloc


def build_sample(
    records: Sequence[ContentRecord],
    events: Iterable[ReportEvent],
    target_n: int,
    seed: int,
    strict: bool = False,
) -> list[ContentRecord]:
    """Draw a sample balanced over country x gender x age-band cells.

    Within each cell items are picked greedily, preferring content ids not yet
    chosen and items whose reporters overlap least with reporters already in
    the sample; remaining ties follow a seeded shuffle, then content id.
    """
    distinct_ids = {r.content_id for r in records}
    if target_n > len(distinct_ids):
        raise InsufficientRecords(
            f"target_n={target_n} exceeds the {len(distinct_ids)} distinct content items"
        )
    if target_n <= 0:
        return []

    reporters_of: dict[str, set[str]] = defaultdict(set)
    for ev in events:
        reporters_of[ev.content_id].add(ev.reporter_id)

    def cell(r: ContentRecord) -> tuple[str, str, str]:
        return (r.country, r.reporter_gender or "", r.reporter_age_band or "")

    cells: dict[tuple, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        cells[cell(r)].append(i)

    if strict:
        countries = sorted({k[0] for k in cells})
        genders = sorted({k[1] for k in cells})
        ages = sorted({k[2] for k in cells})
        empty = [(c, g, a) for c in countries for g in genders for a in ages if (c, g, a) not in cells]
        if empty:
            raise InsufficientRecords(f"empty strata: {empty}")

    rng = random.Random(seed)
    order = list(range(len(records)))
    rng.shuffle(order)
    rank = {idx: pos for pos, idx in enumerate(order)}

    # a cell can contribute at most its number of distinct content ids
    capacity = {k: len({records[i].content_id for i in idx}) for k, idx in cells.items()}
    alloc = _allocate_balanced(capacity, target_n)

    chosen_content: set[str] = set()
    chosen_reporters: set[str] = set()
    sample: list[ContentRecord] = []
    for key in sorted(cells):
        pool = list(cells[key])
        for _ in range(alloc[key]):
            best = min(
                pool,
                key=lambda i: (
                    records[i].content_id in chosen_content,
                    len(reporters_of.get(records[i].content_id, set()) & chosen_reporters),
                    rank[i],
                    records[i].content_id,
                ),
            )
            pool.remove(best)
            rec = records[best]
            sample.append(rec)
            chosen_content.add(rec.content_id)
            chosen_reporters |= reporters_of.get(rec.content_id, set())
    return sample


def to_csv_text(writer, items) -> str:
    buf = io.StringIO()
    writer(items, buf)
    return buf.getvalue()


__all__ = [
    "CATEGORIES",
    "ClipResult",
    "ContentRecord",
    "EmptyInput",
    "FeatureVector",
    "IngestError",
    "InsufficientRecords",
    "MalformedRecord",
    "MissingMau",
    "ReportCategory",
    "ReportEvent",
    "UnknownCategory",
    "UnknownCountry",
    "UnknownPlatform",
    "aggregate_features",
    "build_sample",
    "clip_outliers",
    "merge_feature_maps",
    "parse_events",
    "reporting_rate",
]
