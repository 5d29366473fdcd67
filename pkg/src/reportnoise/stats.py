"""Two-sample tests used to order aggregated classes by report volume.

Pure-Python implementations: Welch's unequal-variance t-test (t tail via the
regularized incomplete beta function), the D'Agostino-Pearson K^2 normality
test, and the two-sample Kolmogorov-Smirnov test with the asymptotic
Kolmogorov distribution. No multiple-comparison correction is applied by
``derive_partial_order``; every ordered pair is tested at the given levels.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Mapping, Sequence

from .taxonomy import AggregatedClass


class Alternative(str, Enum):
    Greater = "greater"
    Less = "less"
    TwoSided = "two-sided"


class InsufficientSample(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


class SampleTooSmall(ValueError):
    def __init__(self, n: int, minimum: int):
        self.n = n
        self.minimum = minimum
        super().__init__(f"sample of size {n} is below the minimum of {minimum}")


class DegenerateSample(ValueError):
    pass


class EmptySample(ValueError):
    pass


class CyclicOrder(ValueError):
    def __init__(self, cycle, p_values):
        self.cycle = cycle
        self.p_values = p_values
        super().__init__(f"significant edges in both directions: {cycle} (p={p_values})")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: float | None = None
    alternative: Alternative = Alternative.TwoSided

    __test__ = False  # not a pytest class


# --------------------------------------------------------------------------
# special functions


_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function Q(lam) = P(K > lam).

    Alternating series ``2 sum (-1)^(j-1) exp(-2 j^2 lam^2)``, summed until a
    term drops below 1e-12; for small ``lam`` the equivalent theta-function
    form converges faster and is used instead.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        # 1 - sqrt(2 pi)/lam * sum exp(-(2j-1)^2 pi^2 / (8 lam^2))
        s = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * lam * lam))
            s += term
            if term < 1e-12 * max(s, 1e-300) or k > 1000:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s = 0.0
    sign = 1.0
    for j in range(1, 1001):
        term = math.exp(-2.0 * j * j * lam * lam)
        s += sign * term
        if term < 1e-12:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * s))


# --------------------------------------------------------------------------
# moments


def _mean_var(a: Sequence[float]) -> tuple[float, float]:
    n = len(a)
    m = math.fsum(a) / n
    v = math.fsum((x - m) ** 2 for x in a) / (n - 1)
    return m, v


def _p_from_t(t: float, df: float, alternative: Alternative) -> float:
    if alternative is Alternative.Greater:
        p = t_sf(t, df)
    elif alternative is Alternative.Less:
        p = t_sf(-t, df)
    else:
        p = 2.0 * t_sf(abs(t), df)
    return min(1.0, max(0.0, p))


# --------------------------------------------------------------------------
# tests


def welch_t(
    a: Sequence[float],
    b: Sequence[float],
    alternative: Alternative | str = Alternative.TwoSided,
) -> TestResult:
    """Welch's t-test; ``Greater`` tests mean(a) > mean(b)."""
    alternative = Alternative(alternative)
    a, b = list(a), list(b)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSample("Welch's t-test needs at least two values per sample")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    na, nb = len(a), len(b)
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0.0:
        if ma == mb:
            raise DegenerateVariance("both samples are constant and equal")
        t = math.copysign(math.inf, ma - mb)
        return TestResult(t, _p_from_t(t, 1.0, alternative), None, alternative)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return TestResult(t, _p_from_t(t, df, alternative), df, alternative)


DAGOSTINO_MIN_N = 20


def _skew_z(g1: float, n: int) -> float:
    y = g1 * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = (
        3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3)
        / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    )
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    if y == 0.0:
        y = 1.0
    return delta * math.log(y / alpha + math.sqrt((y / alpha) ** 2 + 1.0))


def _kurtosis_z(b2: float, n: int) -> float:
    e = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    x = (b2 - e) / math.sqrt(var_b2)
    sqrt_beta1 = (
        6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9))
        * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3)))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    term1 = 1.0 - 2.0 / (9.0 * a)
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    if denom == 0.0:
        return math.inf
    term2 = math.copysign(abs((1.0 - 2.0 / a) / denom) ** (1.0 / 3.0), denom)
    return (term1 - term2) / math.sqrt(2.0 / (9.0 * a))


def dagostino_pearson(a: Sequence[float]) -> TestResult:
    """Omnibus normality test: K^2 = Z(skewness)^2 + Z(kurtosis)^2, chi-square(2)."""
    a = list(a)
    n = len(a)
    if n < DAGOSTINO_MIN_N:
        raise SampleTooSmall(n, DAGOSTINO_MIN_N)
    m = math.fsum(a) / n
    d = [x - m for x in a]
    m2 = math.fsum(x * x for x in d) / n
    if m2 == 0.0:
        raise DegenerateSample("zero variance")
    m3 = math.fsum(x**3 for x in d) / n
    m4 = math.fsum(x**4 for x in d) / n
    g1 = m3 / m2**1.5
    b2 = m4 / (m2 * m2)
    k2 = _skew_z(g1, n) ** 2 + _kurtosis_z(b2, n) ** 2
    # chi-square with 2 df has survival function exp(-x/2)
    return TestResult(k2, math.exp(-k2 / 2.0), 2.0, Alternative.TwoSided)


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """sup |ECDF_a - ECDF_b| evaluated at every observed value."""
    sa, sb = sorted(a), sorted(b)
    na, nb = len(sa), len(sb)
    d = 0.0
    for x in sorted(set(sa) | set(sb)):
        diff = abs(bisect_right(sa, x) / na - bisect_right(sb, x) / nb)
        if diff > d:
            d = diff
    return d


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample KS test, asymptotic p-value with the effective-n correction
    ``lam = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D``, ``ne = na*nb/(na+nb)``."""
    a, b = list(a), list(b)
    if not a or not b:
        raise EmptySample("KS test needs two non-empty samples")
    d = ks_statistic(a, b)
    en = math.sqrt(len(a) * len(b) / (len(a) + len(b)))
    p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    return TestResult(d, p, None, Alternative.TwoSided)


# --------------------------------------------------------------------------
# partial order


class Strength(str, Enum):
    Strong = "strong"
    Weak = "weak"


@dataclass(frozen=True)
class Edge:
    greater: AggregatedClass
    lesser: AggregatedClass
    p_value: float
    strength: Strength


@dataclass
class PartialOrder:
    nodes: list[AggregatedClass]
    edges: list[Edge] = field(default_factory=list)
    alpha_strong: float = 0.05
    alpha_weak: float = 0.10

    def has_edge(self, greater, lesser, strength: Strength | None = None) -> bool:
        g, l = AggregatedClass(greater), AggregatedClass(lesser)
        return any(
            e.greater is g and e.lesser is l and (strength is None or e.strength is strength)
            for e in self.edges
        )

    def to_dot(self) -> str:
        lines = ["digraph partial_order {", "  rankdir=TB;"]
        for n in self.nodes:
            lines.append(f'  "{n.value}";')
        for e in self.edges:
            style = "solid" if e.strength is Strength.Strong else "dashed"
            color = "black" if e.strength is Strength.Strong else "grey"
            lines.append(
                f'  "{e.greater.value}" -> "{e.lesser.value}" '
                f'[label="p={e.p_value:.3g}", style={style}, color={color}];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["greater", "lesser", "p_value", "strength"])
        for e in self.edges:
            w.writerow([e.greater.value, e.lesser.value, repr(e.p_value), e.strength.value])


def _find_cycle(nodes, edges) -> list | None:
    adj: dict = {n: [] for n in nodes}
    for e in edges:
        adj[e.greater].append(e.lesser)
    state: dict = {}
    stack: list = []

    def visit(u):
        state[u] = 1
        stack.append(u)
        for v in adj[u]:
            if state.get(v) == 1:
                return stack[stack.index(v):] + [v]
            if v not in state:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for n in nodes:
        if n not in state:
            found = visit(n)
            if found:
                return found
    return None


def pairwise_welch(
    samples: Mapping[AggregatedClass, Sequence[float]],
) -> dict[tuple[AggregatedClass, AggregatedClass], TestResult]:
    """One-sided Welch test of mean(X) > mean(Y) for every ordered pair."""
    nodes = sorted(samples, key=lambda c: list(AggregatedClass).index(c))
    for n in nodes:
        if len(samples[n]) < 2:
            raise InsufficientSample(f"class {n.value} has fewer than two values")
    return {
        (x, y): welch_t(samples[x], samples[y], Alternative.Greater)
        for x in nodes
        for y in nodes
        if x is not y
    }


def derive_partial_order(
    samples: Mapping[AggregatedClass, Sequence[float]],
    alpha_strong: float = 0.05,
    alpha_weak: float = 0.10,
) -> PartialOrder:
    """Edges X > Y wherever the one-sided Welch test rejects equal means.

    Strong edges at ``alpha_strong``, weak ones at ``alpha_weak``. All
    significant pairs are kept, including those implied by transitivity.
    """
    if not 0.0 < alpha_strong <= alpha_weak < 1.0:
        raise ValueError("need 0 < alpha_strong <= alpha_weak < 1")
    samples = {AggregatedClass(k): v for k, v in samples.items()}
    results = pairwise_welch(samples)
    nodes = sorted(samples, key=lambda c: list(AggregatedClass).index(c))
    edges = []
    for (x, y), res in results.items():
        if res.p_value <= alpha_strong:
            edges.append(Edge(x, y, res.p_value, Strength.Strong))
        elif res.p_value <= alpha_weak:
            edges.append(Edge(x, y, res.p_value, Strength.Weak))
    cycle = _find_cycle(nodes, edges)
    if cycle:
        pv = {
            (e.greater.value, e.lesser.value): e.p_value
            for e in edges
            if e.greater in cycle and e.lesser in cycle
        }
        raise CyclicOrder([c.value for c in cycle], pv)
    return PartialOrder(nodes, edges, alpha_strong, alpha_weak)
