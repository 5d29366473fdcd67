"""Shipped generator presets.

Class marginals are approximate. Only a few per-subset shares are known
(C share and VM rate, M share and VO rate, the IG-FR spam share, the FB-US
opinion share) and the rest are interpolated. ``ig-us`` is the default preset
and is tuned so the noise decomposition lands on ``synth.CALIBRATION_TARGETS``.
"""

from __future__ import annotations

from .synth import Behaviour, GeneratorConfig
from .taxonomy import GcrcClass as G

DEFAULT_PRESET = "ig-us"
DEFAULT_N_CONTENT = 4056


def _ig_us() -> dict:
    return {
        "IG-US": {
            G.C2: 0.300, G.C1: 0.058, G.C0: 0.030, G.C3: 0.020, G.C2Star: 0.016,
            G.M1: 0.020, G.M2: 0.050, G.M3: 0.040, G.MS: 0.070,
            G.H1: 0.065, G.H2: 0.012, G.H3: 0.005,
            G.O1: 0.155, G.O2: 0.005,
            G.I: 0.140, G.J: 0.014,
        }
    }


def _ig_fr() -> dict:
    return {
        "IG-FR": {
            G.C2: 0.060, G.C1: 0.003, G.C0: 0.010, G.C3: 0.005, G.C2Star: 0.002,
            G.M1: 0.050, G.M2: 0.040, G.M3: 0.020, G.MS: 0.580,
            G.H1: 0.020, G.H2: 0.010, G.H3: 0.005,
            G.O1: 0.050, G.O2: 0.010,
            G.I: 0.120, G.J: 0.015,
        }
    }


def _fb_us() -> dict:
    return {
        "FB-US": {
            G.C2: 0.300, G.C1: 0.080, G.C0: 0.030, G.C3: 0.030, G.C2Star: 0.010,
            G.M1: 0.010, G.M2: 0.040, G.M3: 0.040, G.MS: 0.030,
            G.H1: 0.040, G.H2: 0.010, G.H3: 0.007,
            G.O1: 0.190, G.O2: 0.033,
            G.I: 0.130, G.J: 0.020,
        }
    }


# VO base rates; "I" follows the 7.5% of I content with user-level offences
_VO_RATES = {
    G.M1: 0.50, G.M2: 0.55, G.M3: 0.45, G.MS: 0.60,
    G.H2: 0.05, G.H3: 0.05, G.O2: 0.05,
    G.I: 0.075,
    G.H1: 0.0872, G.O1: 0.0872, G.J: 0.0872,
}

_MIX = {
    Behaviour.FaithfulFlagger: 0.30,
    Behaviour.DislikeJealousy: 0.40,
    Behaviour.ConfusedReporter: 0.18,
    Behaviour.AttentionSeeker: 0.12,
}


def preset(name: str, n_content: int = DEFAULT_N_CONTENT, seed: int = 0) -> GeneratorConfig:
    name = name.lower()
    if name == "ig-us":
        marg, vm, vo, mau = _ig_us(), 0.1698, dict(_VO_RATES), {"US": None}
    elif name == "ig-fr":
        vo = dict(_VO_RATES)
        vo.update({G.MS: 0.75, G.M3: 0.30})
        marg, vm, mau = _ig_fr(), 0.10, {"FR": None}
    elif name == "fb-us":
        marg, vm, vo, mau = _fb_us(), 0.16, dict(_VO_RATES), {"US": None}
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    n_reporters = max(1, n_content * 4)
    rate = {"US": 0.81, "FR": 0.78, "UK": 0.81}
    # monthly active users chosen so the distinct-item rate matches the target
    mau = {c: round(1000 * n_content / rate[c]) for c in mau}
    return GeneratorConfig(
        n_content=n_content,
        n_reporters=n_reporters,
        behaviour_mix=dict(_MIX),
        class_marginals=marg,
        vm_rate_given_C=vm,
        vo_rates=vo,
        mau=mau,
        seed=seed,
        name=name,
    )


PRESETS = ("ig-us", "ig-fr", "fb-us")
