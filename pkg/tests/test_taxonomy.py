import itertools

import pytest

from reportnoise.taxonomy import (
    ALL_CLASSES,
    C_CLASSES,
    AggregatedClass,
    GcrcClass,
    NoiseType,
    TargetClass,
    VerificationFlag,
    aggregate_class,
    noise_type,
    target_class,
    target_of,
)

G, V, A, N = GcrcClass, VerificationFlag, AggregatedClass, NoiseType

# (class, base noise type, aggregated class), written out by hand
GOLDEN = [
    ("C0", N.FalseNoise, A.C),
    ("C1", N.FalseNoise, A.C),
    ("C2", N.FalseNoise, A.C),
    ("C2*", N.FalseNoise, A.C),
    ("C3", N.FalseNoise, A.C),
    ("M1", N.SoftNoise, A.HM),
    ("M2", N.QuasiNoise, A.M),
    ("M3", N.QuasiNoise, A.M),
    ("MS", N.QuasiNoise, A.M),
    ("H1", N.HardNoise, A.OH),
    ("H2", N.SoftNoise, A.HM),
    ("H3", N.SoftNoise, A.HM),
    ("O1", N.HardNoise, A.OH),
    ("O2", N.SoftNoise, A.OH),
    ("I", N.HardNoise, A.I),
    ("J", N.HardNoise, A.OH),
]


def test_golden_table_covers_all_48_pairs():
    assert sorted(g for g, _, _ in GOLDEN) == sorted(c.value for c in ALL_CLASSES)
    seen = 0
    for label, base, agg in GOLDEN:
        c = GcrcClass(label)
        assert aggregate_class(c) is agg
        assert noise_type(c, V.NONE) is base
        assert noise_type(c, V.VM) is N.Accurate
        assert noise_type(c, V.VO) is N.QuasiNoise
        seen += 3
    assert seen == 48


@pytest.mark.parametrize(
    "c, v, expected",
    [(G.C2, V.VM, N.Accurate), (G.C1, V.NONE, N.FalseNoise), (G.I, V.VO, N.QuasiNoise), (G.O1, V.NONE, N.HardNoise)],
)
def test_noise_examples(c, v, expected):
    assert noise_type(c, v) is expected


@pytest.mark.parametrize("c, a", [(G.C1, A.C), (G.M2, A.M), (G.H1, A.OH), (G.I, A.I)])
def test_aggregation_examples(c, a):
    assert aggregate_class(c) is a


@pytest.mark.parametrize("a, t", [(A.C, TargetClass.C), (A.HM, TargetClass.Others), (A.OH, TargetClass.Others)])
def test_target_examples(a, t):
    assert target_class(a) is t


def test_aggregation_consistency():
    for c in ALL_CLASSES:
        t = target_of(c)
        assert (t is TargetClass.C) == (c in C_CLASSES)
        assert (t is TargetClass.M) == (c in {G.M2, G.M3, G.MS})
        assert t is target_class(aggregate_class(c))


def test_vm_never_counts_as_noise():
    for c in ALL_CLASSES:
        assert noise_type(c, V.VM) is N.Accurate


def test_each_pair_maps_to_exactly_one_noise_type():
    for c, v in itertools.product(ALL_CLASSES, V):
        results = {noise_type(c, v) for _ in range(3)}
        assert len(results) == 1


def test_parse_labels_and_alias():
    assert GcrcClass.parse("C2*") is G.C2Star
    assert GcrcClass.parse("C2Star") is G.C2Star
    assert G.C2Star.render() == "C2*"
    with pytest.raises(ValueError):
        GcrcClass.parse("C9")


def test_parse_flags():
    assert VerificationFlag.parse("") is V.NONE
    assert VerificationFlag.parse(None) is V.NONE
    assert VerificationFlag.parse("VO") is V.VO
    with pytest.raises(ValueError):
        VerificationFlag.parse("VX")
