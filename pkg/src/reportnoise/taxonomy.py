"""Reported-content class system, verification flags and the mappings
between them (aggregation, classifier targets, noise types).

All functions here are pure and total over their enumerations.
"""

from __future__ import annotations

from enum import Enum


class GcrcClass(str, Enum):
    C0 = "C0"
    C1 = "C1"
    C2 = "C2"
    C2Star = "C2*"
    C3 = "C3"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    MS = "MS"
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"
    O1 = "O1"
    O2 = "O2"
    I = "I"  # noqa: E741
    J = "J"

    @classmethod
    def parse(cls, text: str) -> "GcrcClass":
        """Parse a canonical label. ``C2Star`` is accepted as an alias of ``C2*``."""
        s = text.strip()
        if s == "C2Star":
            return cls.C2Star
        try:
            return cls(s)
        except ValueError:
            raise ValueError(f"unknown GCRC class: {text!r}") from None

    def render(self) -> str:
        return self.value

    def __str__(self) -> str:
        return self.value


class VerificationFlag(str, Enum):
    NONE = ""
    VM = "VM"
    VO = "VO"

    @classmethod
    def parse(cls, text: str | None) -> "VerificationFlag":
        s = (text or "").strip()
        if s in ("", "None", "none"):
            return cls.NONE
        try:
            return cls(s)
        except ValueError:
            raise ValueError(f"unknown verification flag: {text!r}") from None

    def __str__(self) -> str:
        return self.value


class AggregatedClass(str, Enum):
    C = "C"
    M = "M"
    HM = "HM"
    OH = "OH"
    I = "I"  # noqa: E741

    def __str__(self) -> str:
        return self.value


class TargetClass(str, Enum):
    C = "C"
    M = "M"
    I = "I"  # noqa: E741
    Others = "Others"

    def __str__(self) -> str:
        return self.value


class NoiseType(str, Enum):
    Accurate = "accurate"
    FalseNoise = "false_noise"
    QuasiNoise = "quasi_noise"
    SoftNoise = "soft_noise"
    HardNoise = "hard_noise"

    def __str__(self) -> str:
        return self.value


ALL_CLASSES: tuple[GcrcClass, ...] = tuple(GcrcClass)
TARGETS: tuple[TargetClass, ...] = tuple(TargetClass)

C_CLASSES = frozenset(
    {GcrcClass.C0, GcrcClass.C1, GcrcClass.C2, GcrcClass.C2Star, GcrcClass.C3}
)

_AGGREGATION: dict[GcrcClass, AggregatedClass] = {
    GcrcClass.C0: AggregatedClass.C,
    GcrcClass.C1: AggregatedClass.C,
    GcrcClass.C2: AggregatedClass.C,
    GcrcClass.C3: AggregatedClass.C,
    GcrcClass.C2Star: AggregatedClass.C,
    GcrcClass.M2: AggregatedClass.M,
    GcrcClass.M3: AggregatedClass.M,
    GcrcClass.MS: AggregatedClass.M,
    GcrcClass.H2: AggregatedClass.HM,
    GcrcClass.H3: AggregatedClass.HM,
    GcrcClass.M1: AggregatedClass.HM,
    GcrcClass.H1: AggregatedClass.OH,
    GcrcClass.O1: AggregatedClass.OH,
    GcrcClass.O2: AggregatedClass.OH,
    GcrcClass.I: AggregatedClass.I,
    # J is an undefined residual label; OH is its nearest aggregated bucket.
    GcrcClass.J: AggregatedClass.OH,
}

_TARGET: dict[AggregatedClass, TargetClass] = {
    AggregatedClass.C: TargetClass.C,
    AggregatedClass.M: TargetClass.M,
    AggregatedClass.I: TargetClass.I,
    AggregatedClass.HM: TargetClass.Others,
    AggregatedClass.OH: TargetClass.Others,
}

_BASE_NOISE: dict[GcrcClass, NoiseType] = {
    **{c: NoiseType.FalseNoise for c in C_CLASSES},
    GcrcClass.M2: NoiseType.QuasiNoise,
    GcrcClass.M3: NoiseType.QuasiNoise,
    GcrcClass.MS: NoiseType.QuasiNoise,
    GcrcClass.M1: NoiseType.SoftNoise,
    GcrcClass.H2: NoiseType.SoftNoise,
    GcrcClass.H3: NoiseType.SoftNoise,
    GcrcClass.O2: NoiseType.SoftNoise,
    GcrcClass.H1: NoiseType.HardNoise,
    GcrcClass.O1: NoiseType.HardNoise,
    GcrcClass.I: NoiseType.HardNoise,
    GcrcClass.J: NoiseType.HardNoise,
}


def aggregate_class(c: GcrcClass) -> AggregatedClass:
    return _AGGREGATION[GcrcClass(c)]


def target_class(a: AggregatedClass) -> TargetClass:
    return _TARGET[AggregatedClass(a)]


def target_of(c: GcrcClass) -> TargetClass:
    """Classifier target for a GCRC label (aggregation then target mapping)."""
    return _TARGET[_AGGREGATION[GcrcClass(c)]]


def noise_type(c: GcrcClass, v: VerificationFlag = VerificationFlag.NONE) -> NoiseType:
    """Noise bucket of a labelled item.

    VM wins over VO, and VO wins over the base class: a fact-checked item is
    accurate whatever its label, and a policy-breaking item belongs to another
    moderation channel.
    """
    v = VerificationFlag(v)
    if v is VerificationFlag.VM:
        return NoiseType.Accurate
    if v is VerificationFlag.VO:
        return NoiseType.QuasiNoise
    return _BASE_NOISE[GcrcClass(c)]
