"""Synthetic reported-content catalogue, reporter population and report stream.

Reporters follow one of four behaviour profiles. Each profile says which
content classes its reporters tend to flag, which reporting categories they
pick, and how active they are over the window (a truncated discrete Pareto
law). Content items carry a lognormal popularity weight, so a reporter
targeting a class lands on popular items of that class more often.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from . import taxonomy as tx
from .ingest import (
    CATEGORIES,
    COUNTRIES,
    GENDERS,
    PLATFORMS,
    SECONDS_PER_DAY,
    ContentRecord,
    ReportCategory,
    ReportEvent,
    reporting_rate,
)
from .taxonomy import GcrcClass, VerificationFlag

AGE_BANDS = ("18-24", "25-34", "35-44", "45-54", "55+")
DEFAULT_START_TS = 1_588_291_200  # 2020-05-01T00:00:00Z
NORMALIZATION_TOL = 1e-9


class Behaviour(str, Enum):
    FaithfulFlagger = "faithful_flagger"
    DislikeJealousy = "dislike_jealousy"
    ConfusedReporter = "confused_reporter"
    AttentionSeeker = "attention_seeker"

    def __str__(self) -> str:
        return self.value


class InvalidConfig(ValueError):
    """Raised with one human-readable reason per offending field."""

    def __init__(self, errors: Mapping[str, str]):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(f"invalid generator config: {msg}")


@dataclass(frozen=True)
class ActivityLaw:
    """Discrete Pareto: ``floor(scale * U**(-1/shape))``, truncated at ``cap``."""

    shape: float = 1.3
    scale: float = 1.0
    cap: int = 3000

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        # 1 - u lies in (0, 1], keeping the power finite
        draws = np.floor(self.scale * (1.0 - u) ** (-1.0 / self.shape))
        return np.clip(draws, 1, self.cap).astype(np.int64)


@dataclass(frozen=True)
class BehaviourProfile:
    kind: Behaviour
    target_class_weights: Mapping[GcrcClass, float]
    category_weights: Mapping[ReportCategory, float]
    activity: ActivityLaw = ActivityLaw()

    def class_vector(self) -> np.ndarray:
        return np.array([self.target_class_weights.get(c, 0.0) for c in tx.ALL_CLASSES])

    def category_vector(self) -> np.ndarray:
        return np.array([self.category_weights.get(c, 0.0) for c in CATEGORIES])

    def to_dict(self) -> dict:
        return {
            "target_class_weights": {c.value: w for c, w in self.target_class_weights.items()},
            "category_weights": {c.value: w for c, w in self.category_weights.items()},
            "activity": {
                "shape": self.activity.shape,
                "scale": self.activity.scale,
                "cap": self.activity.cap,
            },
        }


CATEGORY_FLOOR = 0.005


def _with_floor(weights: Mapping[ReportCategory, float], floor: float = CATEGORY_FLOOR):
    """Give every category at least ``floor`` mass, rescaling the named ones."""
    named = sum(weights.values())
    unnamed = [c for c in CATEGORIES if c not in weights]
    room = 1.0 - floor * len(unnamed)
    out = {c: floor for c in unnamed}
    for c, w in weights.items():
        out[c] = max(floor, w * room / named)
    total = sum(out.values())
    return {c: out[c] / total for c in CATEGORIES}


def _normalized(weights: Mapping[Any, float]) -> dict:
    total = sum(weights.values())
    return {k: v / total for k, v in weights.items()}


RC = ReportCategory
G = GcrcClass


_C = (G.C0, G.C1, G.C2, G.C3, G.C2Star)


def _affinity(c_weight: float, **others: float) -> dict[GcrcClass, float]:
    raw = {c: c_weight for c in _C}
    for label, w in others.items():
        raw[G.parse(label)] = w
    return _normalized(raw)


# Faithful flaggers are the super-reporters: heavier tail, larger floor.
FAITHFUL_ACTIVITY = ActivityLaw(shape=1.3, scale=3.5, cap=3000)
CASUAL_ACTIVITY = ActivityLaw(shape=2.0, scale=1.0, cap=300)


def default_profiles() -> dict[Behaviour, BehaviourProfile]:
    """The four reporting behaviours with their shipped default weights.

    Class weights are per item: a reporter picks a class with probability
    proportional to weight times the number of items in that class, so the
    ratio of two class weights is the ratio of the report volume an average
    item of each class receives from that behaviour.
    """
    faithful = BehaviourProfile(
        Behaviour.FaithfulFlagger,
        _affinity(1.0, O1=0.4, H1=0.35, O2=0.2, H2=0.1, H3=0.1, J=0.2, I=0.08,
                  M1=0.05, M2=0.05, M3=0.05, MS=0.05),
        _with_floor(
            {
                RC.FalseNews: 0.86, RC.HateSpeech: 0.03, RC.InappropriateContent: 0.03,
                RC.Violence: 0.02, RC.Harassment: 0.02,
            }
        ),
        FAITHFUL_ACTIVITY,
    )
    dislike = BehaviourProfile(
        Behaviour.DislikeJealousy,
        _affinity(0.6, O1=1.0, O2=0.8, H1=0.8, H2=0.5, H3=0.5, J=0.8, I=1.0,
                  M1=0.2, M2=0.1, M3=0.1, MS=0.1),
        _with_floor(
            {
                RC.FalseNews: 0.52, RC.IDontLikeIt: 0.28, RC.Harassment: 0.06,
                RC.HateSpeech: 0.06, RC.InappropriateContent: 0.04,
            }
        ),
        CASUAL_ACTIVITY,
    )
    # picks false news even though another category fits the item better
    confused = BehaviourProfile(
        Behaviour.ConfusedReporter,
        _affinity(0.1, MS=1.0, M2=1.0, M1=1.0, M3=0.3, I=0.15, O1=0.1, H1=0.1,
                  O2=0.1, H2=0.1, H3=0.1, J=0.1),
        _with_floor(
            {
                RC.FalseNews: 0.46, RC.Spam: 0.24, RC.NuditySexualSolicitation: 0.08,
                RC.Violence: 0.07, RC.InappropriateContent: 0.08,
                RC.UnauthorisedSales: 0.04,
            }
        ),
        CASUAL_ACTIVITY,
    )
    attention = BehaviourProfile(
        Behaviour.AttentionSeeker,
        _affinity(0.1, M3=1.0, MS=0.2, M2=0.2, I=0.1, H1=0.1, O1=0.1),
        _with_floor(
            {
                RC.FalseNews: 0.6, RC.Harassment: 0.15, RC.HateSpeech: 0.08,
                RC.Violence: 0.05, RC.InappropriateContent: 0.06,
            }
        ),
        CASUAL_ACTIVITY,
    )
    return {p.kind: p for p in (faithful, dislike, confused, attention)}


@dataclass
class GeneratorConfig:
    """Every knob of the generator. ``class_marginals`` is keyed by subset
    name ("IG-US", "FB-FR", ...); ``subset_weights`` splits ``n_content``
    across those subsets."""

    n_content: int
    n_reporters: int
    behaviour_mix: dict[Behaviour, float]
    class_marginals: dict[str, dict[GcrcClass, float]]
    vm_rate_given_C: float
    vo_rates: dict[GcrcClass, float]
    subset_weights: dict[str, float] | None = None
    profiles: dict[Behaviour, BehaviourProfile] = field(default_factory=default_profiles)
    popularity_sigma: float = 2.0
    window_days: int = 90
    start_ts: int = DEFAULT_START_TS
    mau: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    name: str = "custom"

    # ---- validation -----------------------------------------------------

    def validate(self) -> None:
        errors: dict[str, str] = {}
        if not isinstance(self.n_content, int) or self.n_content <= 0:
            errors["n_content"] = "must be a positive integer"
        if not isinstance(self.n_reporters, int) or self.n_reporters <= 0:
            errors["n_reporters"] = "must be a positive integer"
        if not isinstance(self.window_days, int) or self.window_days <= 0:
            errors["window_days"] = "must be a positive integer"
        if self.start_ts < 0:
            errors["start_ts"] = "must be non-negative"
        if not 0.0 <= self.vm_rate_given_C <= 1.0:
            errors["vm_rate_given_C"] = "must lie in [0, 1]"
        if self.popularity_sigma < 0:
            errors["popularity_sigma"] = "must be non-negative"
        _check_distribution(errors, "behaviour_mix", self.behaviour_mix)
        if not self.class_marginals:
            errors["class_marginals"] = "at least one subset is required"
        for subset, dist in self.class_marginals.items():
            key = f"class_marginals.{subset}"
            if not _valid_subset(subset):
                errors[key] = "subset must look like PLATFORM-COUNTRY, e.g. IG-US"
            else:
                _check_distribution(errors, key, dist)
        if self.subset_weights is not None:
            if set(self.subset_weights) != set(self.class_marginals):
                errors["subset_weights"] = "keys must match class_marginals"
            elif any(w < 0 for w in self.subset_weights.values()) or sum(
                self.subset_weights.values()
            ) <= 0:
                errors["subset_weights"] = "weights must be non-negative with positive sum"
        for cls, p in self.vo_rates.items():
            if not 0.0 <= p <= 1.0:
                errors[f"vo_rates.{cls}"] = "must lie in [0, 1]"
        for kind in Behaviour:
            prof = self.profiles.get(kind)
            if prof is None:
                if self.behaviour_mix.get(kind, 0.0) > 0:
                    errors[f"profiles.{kind.value}"] = "missing profile for a mixed behaviour"
                continue
            _check_distribution(errors, f"profiles.{kind.value}.target_class_weights",
                                prof.target_class_weights)
            _check_distribution(errors, f"profiles.{kind.value}.category_weights",
                                prof.category_weights)
            a = prof.activity
            if a.shape <= 0 or a.scale <= 0:
                errors[f"profiles.{kind.value}.activity"] = "shape and scale must be positive"
            elif a.cap < 1:
                errors[f"profiles.{kind.value}.activity"] = "cap must be at least 1"
        for country, mau in self.mau.items():
            if country not in COUNTRIES or not isinstance(mau, int) or mau <= 0:
                errors[f"mau.{country}"] = "must map a known country to a positive integer"
        if errors:
            raise InvalidConfig(errors)

    # ---- (de)serialization ---------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "n_content": self.n_content,
            "n_reporters": self.n_reporters,
            "window_days": self.window_days,
            "start_ts": self.start_ts,
            "popularity_sigma": self.popularity_sigma,
            "vm_rate_given_C": self.vm_rate_given_C,
            "vo_rates": {c.value: p for c, p in self.vo_rates.items()},
            "behaviour_mix": {b.value: p for b, p in self.behaviour_mix.items()},
            "subset_weights": self.subset_weights,
            "class_marginals": {
                s: {c.value: p for c, p in d.items()} for s, d in self.class_marginals.items()
            },
            "mau": dict(self.mau),
            "profiles": {b.value: p.to_dict() for b, p in self.profiles.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeneratorConfig":
        errors: dict[str, str] = {}
        required = ("n_content", "n_reporters", "behaviour_mix", "class_marginals",
                    "vm_rate_given_C")
        for key in required:
            if key not in data:
                errors[key] = "required"
        known = {
            "name", "seed", "n_content", "n_reporters", "window_days", "start_ts",
            "popularity_sigma", "vm_rate_given_C", "vo_rates", "behaviour_mix",
            "subset_weights", "class_marginals", "mau", "profiles",
        }
        for key in data:
            if key not in known:
                errors[key] = "unknown field"
        if errors:
            raise InvalidConfig(errors)

        def enum_map(enum, mapping, where):
            out = {}
            for k, v in (mapping or {}).items():
                try:
                    member = enum.parse(k) if hasattr(enum, "parse") else enum(k)
                except ValueError:
                    errors[f"{where}.{k}"] = f"unknown {enum.__name__} label"
                    continue
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    errors[f"{where}.{k}"] = "must be a number"
                    continue
                out[member] = float(v)
            return out

        profiles = default_profiles()
        for name, spec in (data.get("profiles") or {}).items():
            try:
                kind = Behaviour(name)
            except ValueError:
                errors[f"profiles.{name}"] = "unknown behaviour"
                continue
            act = spec.get("activity", {})
            profiles[kind] = BehaviourProfile(
                kind,
                enum_map(GcrcClass, spec.get("target_class_weights"),
                         f"profiles.{name}.target_class_weights"),
                enum_map(ReportCategory, spec.get("category_weights"),
                         f"profiles.{name}.category_weights"),
                ActivityLaw(
                    float(act.get("shape", 1.3)),
                    float(act.get("scale", 1.0)),
                    int(act.get("cap", 3000)),
                ),
            )
        cfg = cls(
            n_content=data["n_content"],
            n_reporters=data["n_reporters"],
            behaviour_mix=enum_map(Behaviour, data["behaviour_mix"], "behaviour_mix"),
            class_marginals={
                str(s): enum_map(GcrcClass, d, f"class_marginals.{s}")
                for s, d in (data["class_marginals"] or {}).items()
            },
            vm_rate_given_C=data["vm_rate_given_C"],
            vo_rates=enum_map(GcrcClass, data.get("vo_rates"), "vo_rates"),
            subset_weights=data.get("subset_weights"),
            profiles=profiles,
            popularity_sigma=data.get("popularity_sigma", 2.0),
            window_days=data.get("window_days", 90),
            start_ts=data.get("start_ts", DEFAULT_START_TS),
            mau=dict(data.get("mau") or {}),
            seed=data.get("seed", 0),
            name=data.get("name", "custom"),
        )
        if errors:
            raise InvalidConfig(errors)
        for key in ("vm_rate_given_C", "popularity_sigma", "start_ts", "seed"):
            value = getattr(cfg, key)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                errors[key] = "must be a number"
        if errors:
            raise InvalidConfig(errors)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig({"<document>": f"not valid JSON ({exc.msg})"}) from None
        if not isinstance(data, dict):
            raise InvalidConfig({"<document>": "top level must be an object"})
        return cls.from_dict(data)


def _valid_subset(name: str) -> bool:
    parts = name.split("-")
    return len(parts) == 2 and parts[0] in PLATFORMS and parts[1] in COUNTRIES


def _check_distribution(errors: dict, key: str, dist: Mapping) -> None:
    if not dist:
        errors[key] = "empty distribution"
        return
    if any(p < 0 for p in dist.values()):
        errors[key] = "negative weight"
        return
    total = sum(dist.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        errors[key] = f"weights sum to {total:.12g}, expected 1"


# --------------------------------------------------------------------------
# generation


@dataclass
class SynthDataset:
    contents: list[ContentRecord]
    events: list[ReportEvent]
    reporters: dict[str, Behaviour]
    reporter_attrs: dict[str, tuple[str, str]]
    config: GeneratorConfig


def _substream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def largest_remainder(weights: Mapping[Any, float], total: int) -> dict[Any, int]:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Floors first, then one extra unit to each of the largest fractional parts;
    ties go to the key that comes first in iteration order.
    """
    keys = list(weights)
    wsum = sum(weights.values())
    if wsum <= 0:
        raise ValueError("weights must have positive sum")
    exact = [weights[k] * total / wsum for k in keys]
    floors = [math.floor(x) for x in exact]
    short = total - sum(floors)
    order = sorted(range(len(keys)), key=lambda i: (-(exact[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return {k: n for k, n in zip(keys, floors)}


def generate(config: GeneratorConfig) -> SynthDataset:
    """Build a synthetic dataset; the same config (seed included) gives the same output."""
    config.validate()
    seed = config.seed
    classes = tx.ALL_CLASSES
    class_idx = {c: i for i, c in enumerate(classes)}

    subsets = sorted(config.class_marginals)
    sw = config.subset_weights or {s: 1.0 for s in subsets}
    per_subset = largest_remainder({s: sw[s] for s in subsets}, config.n_content)

    # -- content catalogue: exact class quotas per subset, then shuffled
    rng_c = _substream(seed, "contents")
    item_subset, item_class = [], []
    for s in subsets:
        marg = config.class_marginals[s]
        quotas = largest_remainder({c: marg.get(c, 0.0) for c in classes}, per_subset[s])
        for c in classes:
            item_subset += [s] * quotas[c]
            item_class += [class_idx[c]] * quotas[c]
    perm = rng_c.permutation(config.n_content)
    item_subset = np.array(item_subset, dtype=object)[perm]
    item_class = np.array(item_class, dtype=np.int64)[perm]
    n = config.n_content

    is_c = np.isin(item_class, [class_idx[c] for c in tx.C_CLASSES])
    vm = is_c & (rng_c.random(n) < config.vm_rate_given_C)
    vo_p = np.array([config.vo_rates.get(c, 0.0) for c in classes])[item_class]
    vo = ~vm & (rng_c.random(n) < vo_p)
    popularity = rng_c.lognormal(0.0, config.popularity_sigma, n)

    # -- reporters
    rng_r = _substream(seed, "reporters")
    kinds = [b for b in Behaviour if config.behaviour_mix.get(b, 0.0) > 0]
    mix = np.array([config.behaviour_mix[b] for b in kinds])
    n_rep = config.n_reporters
    rep_kind = rng_r.choice(len(kinds), size=n_rep, p=mix / mix.sum())
    rep_subset_idx = rng_r.choice(
        len(subsets), size=n_rep, p=np.array([per_subset[s] for s in subsets]) / n
    )
    rep_activity = np.zeros(n_rep, dtype=np.int64)
    for k, b in enumerate(kinds):
        mask = rep_kind == k
        rep_activity[mask] = config.profiles[b].activity.sample(rng_r, int(mask.sum()))
    rep_gender = rng_r.choice(len(GENDERS), size=n_rep, p=[0.48, 0.48, 0.04])
    rep_age = rng_r.choice(len(AGE_BANDS), size=n_rep)

    # -- reports: a class with probability proportional to the profile's
    # per-item class weight times the class size, then an item of that class
    # by popularity
    rng_e = _substream(seed, "events")
    ev_reporter, ev_item, ev_cat = [], [], []
    n_cls = len(classes)
    for si, s in enumerate(subsets):
        in_s = item_subset == s
        members = [np.flatnonzero(in_s & (item_class == ci)) for ci in range(n_cls)]
        cums = [np.cumsum(popularity[m]) if m.size else None for m in members]
        sizes = np.array([m.size for m in members], dtype=float)
        if sizes.sum() == 0:
            continue
        for k, b in enumerate(kinds):
            reps = np.flatnonzero((rep_subset_idx == si) & (rep_kind == k))
            if reps.size == 0:
                continue
            prof = config.profiles[b]
            cw = prof.class_vector() * sizes
            if cw.sum() <= 0:
                cw = sizes.copy()
            reporter = np.repeat(reps, rep_activity[reps])
            m = reporter.size
            cls_draw = rng_e.choice(n_cls, size=m, p=cw / cw.sum())
            item = np.empty(m, dtype=np.int64)
            for ci in range(n_cls):
                sel = np.flatnonzero(cls_draw == ci)
                if sel.size == 0:
                    continue
                idx, cum = members[ci], cums[ci]
                u = rng_e.random(sel.size) * cum[-1]
                item[sel] = idx[np.minimum(np.searchsorted(cum, u, side="right"), idx.size - 1)]
            catw = prof.category_vector()
            cat = rng_e.choice(len(CATEGORIES), size=m, p=catw / catw.sum())
            ev_reporter.append(reporter)
            ev_item.append(item)
            ev_cat.append(cat)

    reporter_arr = np.concatenate(ev_reporter) if ev_reporter else np.zeros(0, np.int64)
    item_arr = np.concatenate(ev_item) if ev_item else np.zeros(0, np.int64)
    cat_arr = np.concatenate(ev_cat) if ev_cat else np.zeros(0, np.int64)

    # every catalogue item was reported at least once
    uncovered = np.setdiff1d(np.arange(n), item_arr)
    if uncovered.size:
        extra_rep, extra_cat = _cover_items(
            uncovered, item_subset, item_class, subsets, kinds, config,
            rep_kind, rep_subset_idx, rng_e,
        )
        reporter_arr = np.concatenate([reporter_arr, extra_rep])
        item_arr = np.concatenate([item_arr, uncovered])
        cat_arr = np.concatenate([cat_arr, extra_cat])

    span = config.window_days * SECONDS_PER_DAY
    ts = config.start_ts + rng_e.integers(0, span, size=item_arr.size)
    order = np.lexsort((cat_arr, item_arr, reporter_arr, ts))

    width_c = len(str(n))
    width_r = len(str(n_rep))
    content_ids = [f"c{i:0{width_c}d}" for i in range(n)]
    reporter_ids = [f"u{i:0{width_r}d}" for i in range(n_rep)]
    platform_of = {s: s.split("-")[0] for s in subsets}
    country_of = {s: s.split("-")[1] for s in subsets}

    width_e = len(str(item_arr.size))
    events = []
    first_reporter = {}
    for j, o in enumerate(order):
        it = int(item_arr[o])
        rp = int(reporter_arr[o])
        s = item_subset[it]
        first_reporter.setdefault(it, rp)
        events.append(
            ReportEvent(
                f"r{j:0{width_e}d}",
                content_ids[it],
                reporter_ids[rp],
                platform_of[s],
                country_of[s],
                CATEGORIES[int(cat_arr[o])],
                int(ts[o]),
            )
        )

    contents = []
    for i in range(n):
        s = item_subset[i]
        flag = (
            VerificationFlag.VM if vm[i] else VerificationFlag.VO if vo[i] else VerificationFlag.NONE
        )
        rp = first_reporter.get(i)
        contents.append(
            ContentRecord(
                content_ids[i],
                platform_of[s],
                country_of[s],
                classes[int(item_class[i])],
                flag,
                GENDERS[rep_gender[rp]] if rp is not None else None,
                AGE_BANDS[rep_age[rp]] if rp is not None else None,
            )
        )

    reporters = {reporter_ids[r]: kinds[int(rep_kind[r])] for r in range(n_rep)}
    attrs = {
        reporter_ids[r]: (GENDERS[rep_gender[r]], AGE_BANDS[rep_age[r]]) for r in range(n_rep)
    }
    return SynthDataset(contents, events, reporters, attrs, config)


def _cover_items(uncovered, item_subset, item_class, subsets, kinds, config,
                 rep_kind, rep_subset_idx, rng):
    """One report for each never-reported item, from a reporter of its subset
    whose behaviour is drawn in proportion to mix weight times class affinity."""
    reporters, cats = [], []
    subset_pos = {s: i for i, s in enumerate(subsets)}
    mix = np.array([config.behaviour_mix[b] for b in kinds])
    pools = {
        (si, k): np.flatnonzero((rep_subset_idx == si) & (rep_kind == k))
        for si in range(len(subsets))
        for k in range(len(kinds))
    }
    for it in uncovered:
        si = subset_pos[item_subset[it]]
        ci = int(item_class[it])
        w = mix * np.array([config.profiles[b].class_vector()[ci] for b in kinds])
        w = w * np.array([pools[(si, k)].size > 0 for k in range(len(kinds))])
        if w.sum() == 0:
            w = np.array([pools[(si, k)].size > 0 for k in range(len(kinds))], float)
        if w.sum() == 0:
            # subset without reporters: borrow any reporter
            k = int(rng.choice(len(kinds), p=mix / mix.sum()))
            pool = np.flatnonzero(rep_kind == k)
        else:
            k = int(rng.choice(len(kinds), p=w / w.sum()))
            pool = pools[(si, k)]
        reporters.append(int(pool[rng.integers(pool.size)]))
        catw = config.profiles[kinds[k]].category_vector()
        cats.append(int(rng.choice(len(CATEGORIES), p=catw / catw.sum())))
    return np.array(reporters, dtype=np.int64), np.array(cats, dtype=np.int64)


# --------------------------------------------------------------------------
# calibration report


@dataclass
class CalibrationRow:
    metric: str
    achieved: float
    target: float | None = None
    tolerance: float | None = None

    @property
    def ok(self) -> bool | None:
        if self.target is None:
            return None
        if self.tolerance is None:
            return self.achieved >= self.target
        return abs(self.achieved - self.target) <= self.tolerance


# reference marginals the generator is tuned against, with their tolerances
CALIBRATION_TARGETS = {
    "c_share": (0.418, 0.02),
    "inaccuracy": (0.93, 0.02),
    "false_noise": (0.35, 0.02),
    "quasi_noise": (0.20, 0.02),
    "soft_noise": (0.03, 0.02),
    "hard_noise": (0.34, 0.02),
}


def calibration_report(dataset: SynthDataset, targets: Mapping[str, tuple] | None = None):
    """Achieved marginals of a generated dataset next to their targets.

    Targets only apply when the caller passes them (or the default preset is
    being checked); other presets report achieved values alone.
    """
    from .metrics import decompose  # local: metrics imports ingest, not synth

    targets = dict(targets or {})
    rows: list[CalibrationRow] = []
    contents = dataset.contents
    n = len(contents)

    def row(metric, value):
        t = targets.get(metric)
        rows.append(CalibrationRow(metric, value, *(t if t else (None, None))))

    agg = Counter(tx.aggregate_class(r.gcrc) for r in contents)
    row("c_share", agg[tx.AggregatedClass.C] / n)
    m_items = [r for r in contents if r.gcrc in (G.M1, G.M2, G.M3, G.MS)]
    row("m_share", len(m_items) / n)
    c_items = [r for r in contents if r.gcrc in tx.C_CLASSES]
    row("vm_rate_given_C",
        sum(r.verification is VerificationFlag.VM for r in c_items) / max(1, len(c_items)))
    row("vo_rate_given_M",
        sum(r.verification is VerificationFlag.VO for r in m_items) / max(1, len(m_items)))
    i_items = [r for r in contents if r.gcrc is G.I]
    row("vo_rate_given_I",
        sum(r.verification is VerificationFlag.VO for r in i_items) / max(1, len(i_items)))

    d = decompose(contents)
    row("inaccuracy", 1.0 - d.accurate)
    row("accurate", d.accurate)
    for name in ("false_noise", "quasi_noise", "soft_noise", "hard_noise"):
        row(name, getattr(d, name))

    per_reporter = Counter(ev.reporter_id for ev in dataset.events)
    counts = sorted(per_reporter.values())
    row("events", float(len(dataset.events)))
    row("active_reporters", float(len(counts)))
    row("max_reports_per_reporter", float(counts[-1]) if counts else 0.0)
    row("median_reports_per_reporter", float(np.median(counts)) if counts else 0.0)
    sr = targets.get("super_reporters")
    rows.append(CalibrationRow(
        "super_reporters", float(sum(c > 1000 for c in counts)),
        sr[0] if sr else None, None,
    ))
    if dataset.config.mau:
        for country, rate in reporting_rate(dataset.events, dataset.config.mau).items():
            row(f"reporting_rate_{country}", rate)
    return rows


def format_calibration(rows) -> str:
    lines = [f"{'metric':<30} {'achieved':>12} {'target':>10} {'tol':>7}  status"]
    for r in rows:
        tgt = "" if r.target is None else f"{r.target:.4g}"
        tol = "" if r.tolerance is None else f"{r.tolerance:.3g}"
        status = "" if r.ok is None else ("ok" if r.ok else "MISS")
        lines.append(f"{r.metric:<30} {r.achieved:>12.4f} {tgt:>10} {tol:>7}  {status}")
    return "\n".join(lines)
