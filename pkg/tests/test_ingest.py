import io
import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reportnoise.ingest import (
    CATEGORIES,
    ContentRecord,
    FeatureVector,
    InsufficientRecords,
    MalformedRecord,
    MissingMau,
    ReportCategory,
    ReportEvent,
    UnknownCategory,
    UnknownCountry,
    aggregate_features,
    build_sample,
    clip_outliers,
    dedupe_reports,
    merge_feature_maps,
    nearest_rank_quantile,
    parse_contents,
    parse_events,
    parse_features,
    reporting_rate,
    write_contents,
    write_events,
    write_features,
)
from reportnoise.taxonomy import GcrcClass, VerificationFlag

RC = ReportCategory


def ev(rid, cid="c1", cat=RC.FalseNews, ts=100, reporter="u1", country="US", platform="IG"):
    return ReportEvent(str(rid), cid, reporter, platform, country, cat, ts)


def line(**over):
    obj = {"report_id": "r1", "content_id": "c1", "reporter_id": "u1", "platform": "IG",
           "country": "FR", "category": "false_news", "ts": 5}
    obj.update(over)
    return json.dumps(obj)


def test_parse_three_lines_in_order():
    text = "\n".join(line(report_id=f"r{i}", ts=i) for i in range(3)) + "\n"
    events = parse_events(io.StringIO(text))
    assert [e.report_id for e in events] == ["r0", "r1", "r2"]
    assert events[0].category is RC.FalseNews


def test_empty_file_gives_no_events():
    assert parse_events(io.StringIO("")) == []


def test_unknown_category_reports_its_line():
    text = line() + "\n" + line(category="memes") + "\n"
    with pytest.raises(UnknownCategory) as err:
        parse_events(io.StringIO(text))
    assert err.value.line == 2


@pytest.mark.parametrize(
    "over, exc",
    [({"country": "DE"}, UnknownCountry), ({"ts": "x"}, MalformedRecord), ({"report_id": ""}, MalformedRecord)],
)
def test_bad_fields(over, exc):
    with pytest.raises(exc):
        parse_events(io.StringIO(line(**over)))


def test_malformed_json():
    with pytest.raises(MalformedRecord):
        parse_events(io.StringIO("{not json\n"))


def test_event_roundtrip():
    events = [ev(i, cid=f"c{i % 3}", cat=CATEGORIES[i % 10], ts=i) for i in range(20)]
    buf = io.StringIO()
    write_events(events, buf)
    assert parse_events(io.StringIO(buf.getvalue())) == events


def test_contents_roundtrip_and_alias():
    recs = [
        ContentRecord("c1", "IG", "US", GcrcClass.C2Star, VerificationFlag.VM, "F", "18-24"),
        ContentRecord("c2", "FB", "FR", GcrcClass.I, VerificationFlag.NONE, None, None),
        ContentRecord("c3", "FB", "UK", None),
    ]
    buf = io.StringIO()
    write_contents(recs, buf)
    assert parse_contents(io.StringIO(buf.getvalue())) == recs
    text = "content_id,platform,country,gcrc,verification,gender,age_band\nx,IG,US,C2Star,,,\n"
    assert parse_contents(io.StringIO(text))[0].gcrc is GcrcClass.C2Star


def test_contents_bad_label_line_number():
    text = "content_id,platform,country,gcrc,verification,gender,age_band\na,IG,US,C1,,,\nb,IG,US,ZZ,,,\n"
    with pytest.raises(MalformedRecord) as err:
        parse_contents(io.StringIO(text))
    assert err.value.line == 3


def test_features_roundtrip_and_validation():
    vecs = [FeatureVector("a", (1, 0, 0, 0, 0, 2, 0, 0, 0, 0)), FeatureVector("b", tuple(range(10)))]
    buf = io.StringIO()
    write_features(vecs, buf)
    assert parse_features(io.StringIO(buf.getvalue())) == vecs
    bad = buf.getvalue().replace(",3\n", ",4\n", 1)
    with pytest.raises(MalformedRecord):
        parse_features(io.StringIO(bad))


def test_aggregate_counts_per_category():
    events = [ev(i, cat=RC.FalseNews) for i in range(3)] + [ev(i + 3, cat=RC.Spam) for i in range(2)]
    fv = aggregate_features(events, (0, 1000))["c1"]
    assert fv[RC.FalseNews] == 3 and fv[RC.Spam] == 2 and fv.total == 5


def test_window_is_half_open():
    events = [ev(1, ts=0), ev(2, ts=999), ev(3, ts=1000), ev(4, cid="c2", ts=5000)]
    out = aggregate_features(events, (0, 1000))
    assert out["c1"].total == 2
    assert "c2" not in out


def test_duplicate_report_counted_once():
    events = [ev(1), ev(1), ev(2)]
    assert aggregate_features(events, (0, 1000))["c1"].total == 2


def test_dedupe_matches_brute_force():
    rng = random.Random(7)
    events = [ev(rng.randrange(30), cid=f"c{rng.randrange(4)}", cat=rng.choice(CATEGORIES), ts=rng.randrange(50))
              for _ in range(200)]
    kept = dedupe_reports(events)
    assert len(kept) == len({e.report_id for e in events})
    for e in kept:
        dups = [d for d in events if d.report_id == e.report_id]
        assert e in dups


event_lists = st.lists(
    st.builds(
        ev,
        rid=st.integers(0, 60),
        cid=st.sampled_from(["a", "b", "c", "d"]),
        cat=st.sampled_from(CATEGORIES),
        ts=st.integers(0, 200),
    ),
    max_size=80,
)


@settings(max_examples=150, deadline=None)
@given(event_lists, st.randoms())
def test_aggregation_is_order_independent(events, rnd):
    shuffled = list(events)
    rnd.shuffle(shuffled)
    assert aggregate_features(events, (10, 150)) == aggregate_features(shuffled, (10, 150))


@settings(max_examples=150, deadline=None)
@given(event_lists, st.integers(0, 200))
def test_partition_merge(events, cut):
    # disjoint partition by report id (time cut would not keep duplicates apart)
    left = [e for e in events if int(e.report_id) < cut % 61]
    right = [e for e in events if int(e.report_id) >= cut % 61]
    w = (0, 201)
    merged = merge_feature_maps(aggregate_features(left, w, 90), aggregate_features(right, w, 90))
    assert merged == aggregate_features(events, w, 90)


def vec(cid, total):
    return FeatureVector(cid, (total,) + (0,) * 9)


def test_clip_at_one_keeps_everything():
    vecs = [vec(str(i), t) for i, t in enumerate([5, 1, 99, 3])]
    kept, excluded = clip_outliers(vecs, 1.0)
    assert kept == vecs and excluded == []


def test_clip_one_to_thousand():
    vecs = [vec(str(t), t) for t in range(1, 1001)]
    result = clip_outliers(vecs, 0.999)
    assert result.threshold == 999
    assert [v.total for v in result.excluded] == [1000]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=60), st.floats(0.01, 1.0))
def test_clip_partition_property(totals, q):
    vecs = [vec(str(i), t) for i, t in enumerate(totals)]
    res = clip_outliers(vecs, q)
    assert len(res.kept) + len(res.excluded) == len(vecs)
    assert all(v.total > res.threshold for v in res.excluded)
    assert all(v.total <= res.threshold for v in res.kept)
    ordered = sorted(totals)
    assert res.threshold == ordered[max(1, math.ceil(q * len(totals) - 1e-9)) - 1]


def test_nearest_rank_quantile():
    assert nearest_rank_quantile([3, 1, 2, 4], 0.5) == 2
    assert nearest_rank_quantile([3, 1, 2, 4], 0.51) == 3
    assert nearest_rank_quantile([7], 0.001) == 7


def test_reporting_rate_examples():
    events = [ev(i, cid=f"c{i}", country="FR") for i in range(78)]
    assert reporting_rate(events, {"FR": 100_000})["FR"] == pytest.approx(0.78)
    assert reporting_rate([], {"FR": 10, "US": 5}) == {"FR": 0.0, "US": 0.0}
    same = [ev(i, cid="x", country="US") for i in range(50)]
    assert reporting_rate(same, {"US": 1000})["US"] == pytest.approx(1.0)
    with pytest.raises(MissingMau):
        reporting_rate(same, {"FR": 1000})


def _population(n_per_country=8):
    recs = []
    for country in ("FR", "US"):
        for i in range(n_per_country):
            recs.append(ContentRecord(f"{country}{i}", "IG", country, GcrcClass.C1, VerificationFlag.NONE, "F", "18-24"))
    return recs


def test_build_sample_whole_population():
    recs = _population()
    out = build_sample(recs, [], len(recs), seed=1)
    assert sorted(r.content_id for r in out) == sorted(r.content_id for r in recs)


def test_build_sample_balances_countries():
    out = build_sample(_population(), [], 10, seed=3)
    assert sum(r.country == "FR" for r in out) == 5


def test_build_sample_avoids_repeat_content_ids():
    recs = [ContentRecord("dup", "IG", "US", GcrcClass.I, reporter_gender="F", reporter_age_band="18-24")
            for _ in range(3)]
    recs += [ContentRecord(f"u{i}", "IG", "US", GcrcClass.I, reporter_gender="F", reporter_age_band="18-24")
             for i in range(4)]
    for seed in range(20):
        out = build_sample(recs, [], 5, seed=seed)
        ids = [r.content_id for r in out]
        assert len(set(ids)) == len(ids)


def test_build_sample_prefers_new_reporters():
    recs = [ContentRecord(c, "IG", "US", GcrcClass.I, reporter_gender="F", reporter_age_band="18-24")
            for c in ("a", "b", "c")]
    events = [ev(1, cid="a", reporter="u1"), ev(2, cid="b", reporter="u1"), ev(3, cid="c", reporter="u2")]
    for seed in range(10):
        ids = {r.content_id for r in build_sample(recs, events, 2, seed=seed)}
        assert "c" in ids


def test_build_sample_deterministic_and_errors():
    recs = _population()
    assert build_sample(recs, [], 7, seed=11) == build_sample(recs, [], 7, seed=11)
    with pytest.raises(InsufficientRecords):
        build_sample(recs, [], 100, seed=0)
    uneven = recs + [ContentRecord("m", "IG", "FR", GcrcClass.I, reporter_gender="M", reporter_age_band="25-34")]
    with pytest.raises(InsufficientRecords):
        build_sample(uneven, [], 4, seed=0, strict=True)
