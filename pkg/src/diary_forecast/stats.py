"""Paired t-test with a self-contained Student-t distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NoConvergence, TooFewPairs

_FPMIN = 1e-300
_EPS = 1e-15
_MAX_TERMS = 10_000


def _beta_cf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
    h = d
    for m in range(1, _MAX_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
        c = 1.0 + aa / c
        c = c if abs(c) > _FPMIN else _FPMIN
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
        c = 1.0 + aa / c
        c = c if abs(c) > _FPMIN else _FPMIN
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NoConvergence(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc needs a, b > 0")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast on this side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, dof: float) -> float:
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    t2 = t * t
    if t2 < dof:
        # near zero dof / (dof + t^2) rounds towards 1; use the complementary form
        half = 0.5 * betainc(0.5, dof / 2.0, t2 / (dof + t2))
        return 0.5 + half if t > 0 else 0.5 - half
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t2))
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    dof: int

    def to_dict(self) -> dict:
        return {"t_statistic": self.t_statistic, "p_value": self.p_value, "dof": self.dof}


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test on ``d = a - b``.

    If every difference is exactly zero the result is ``t = 0, p = 1``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(a) != len(b):
        raise LengthMismatch(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise TooFewPairs(f"a paired t-test needs at least 2 pairs, got {n}")
    d = a - b
    dof = n - 1
    if np.all(d == 0):
        return TTestResult(0.0, 1.0, dof)
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0:
        # identical nonzero differences: the statistic is unbounded
        t = math.copysign(math.inf, mean)
        return TTestResult(t, 0.0, dof)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * student_t_cdf(-abs(t), dof)
    return TTestResult(t, min(1.0, max(0.0, p)), dof)
