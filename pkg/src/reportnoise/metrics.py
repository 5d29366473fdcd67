"""Inaccuracy, noise decomposition and per-class distribution tables over a
labelled sample of reported content."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Sequence

from .ingest import ContentRecord
from .taxonomy import ALL_CLASSES, GcrcClass, NoiseType, VerificationFlag, noise_type


class EmptySample(ValueError):
    pass


class UnlabelledRecord(ValueError):
    def __init__(self, content_ids: Sequence[str]):
        self.content_ids = list(content_ids)
        shown = ", ".join(self.content_ids[:20])
        more = f" (+{len(self.content_ids) - 20} more)" if len(self.content_ids) > 20 else ""
        super().__init__(f"unlabelled records: {shown}{more}")


def labelled_only(records: Iterable[ContentRecord]) -> list[ContentRecord]:
    return [r for r in records if r.gcrc is not None]


def _check(sample: Sequence[ContentRecord]) -> None:
    if not sample:
        raise EmptySample("metrics need at least one record")
    missing = [r.content_id for r in sample if r.gcrc is None]
    if missing:
        raise UnlabelledRecord(missing)


def inaccuracy(sample: Sequence[ContentRecord]) -> float:
    """Share of reported items not confirmed as misinformation: 1 - VM/n."""
    sample = list(sample)
    _check(sample)
    vm = sum(r.verification is VerificationFlag.VM for r in sample)
    return 1.0 - vm / len(sample)


@dataclass(frozen=True)
class NoiseDecomposition:
    accurate: float
    false_noise: float
    quasi_noise: float
    soft_noise: float
    hard_noise: float
    n: int

    @property
    def inaccuracy(self) -> float:
        return 1.0 - self.accurate

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        d = self.as_dict()
        d["inaccuracy"] = self.inaccuracy
        return json.dumps(d, indent=2, sort_keys=True)


def noise_counts(sample: Iterable[ContentRecord]) -> Counter:
    return Counter(noise_type(r.gcrc, r.verification) for r in sample)


def decompose(sample: Sequence[ContentRecord]) -> NoiseDecomposition:
    sample = list(sample)
    _check(sample)
    n = len(sample)
    counts = noise_counts(sample)
    return NoiseDecomposition(
        # defined through inaccuracy so the two agree bit for bit
        accurate=1.0 - inaccuracy(sample),
        false_noise=counts[NoiseType.FalseNoise] / n,
        quasi_noise=counts[NoiseType.QuasiNoise] / n,
        soft_noise=counts[NoiseType.SoftNoise] / n,
        hard_noise=counts[NoiseType.HardNoise] / n,
        n=n,
    )


# --------------------------------------------------------------------------
# per-class distribution table


@dataclass(frozen=True)
class DistributionRow:
    platform: str
    country: str
    gcrc: GcrcClass
    count: int
    share: float
    deviation: int | None  # FB minus IG count for the class; None if a platform is missing


@dataclass
class ClassDistribution:
    rows: list[DistributionRow]

    def lookup(self, platform: str, country: str, gcrc: GcrcClass) -> DistributionRow:
        for r in self.rows:
            if (r.platform, r.country, r.gcrc) == (platform, country, gcrc):
                return r
        raise KeyError((platform, country, gcrc))

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["platform", "country", "class", "count", "share", "deviation"])
        for r in self.rows:
            w.writerow(
                [
                    r.platform,
                    r.country,
                    r.gcrc.value,
                    r.count,
                    repr(r.share),
                    "" if r.deviation is None else r.deviation,
                ]
            )


def distribution_table(sample: Sequence[ContentRecord]) -> ClassDistribution:
    """Counts and shares of each class per (platform, country), with the
    FB-minus-IG count deviation per class and country."""
    sample = list(sample)
    _check(sample)
    counts = Counter((r.platform, r.country, r.gcrc) for r in sample)
    totals = Counter((r.platform, r.country) for r in sample)
    rows = []
    for platform, country in sorted(totals):
        both = ("FB", country) in totals and ("IG", country) in totals
        for c in ALL_CLASSES:
            k = counts[(platform, country, c)]
            dev = counts[("FB", country, c)] - counts[("IG", country, c)] if both else None
            rows.append(
                DistributionRow(platform, country, c, k, k / totals[(platform, country)], dev)
            )
    return ClassDistribution(rows)
