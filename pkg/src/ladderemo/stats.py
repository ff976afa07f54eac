"""Welch's t-test with a self-contained Student-t tail.

The tail uses ``P(T > t) = 0.5 * I_{df / (df + t^2)}(df / 2, 1 / 2)`` for
``t >= 0``, where ``I_x(a, b)`` is the regularized incomplete beta function
evaluated by the modified Lentz continued fraction.
"""

import math

from .errors import ArgumentError

_FPMIN = 1e-300
_EPS = 3e-16
_MAX_ITER = 500


def _beta_cf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ArgumentError("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ArgumentError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_sf(t, df):
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ArgumentError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def _mean_var(sample):
    n = len(sample)
    m = math.fsum(sample) / n
    v = math.fsum((s - m) ** 2 for s in sample) / (n - 1)
    return n, m, v


def welch_t(a, b):
    """Welch statistic and Welch-Satterthwaite degrees of freedom."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) < 2 or len(b) < 2:
        raise ArgumentError("each sample needs at least two values")
    na, ma, va = _mean_var(a)
    nb, mb, vb = _mean_var(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, float("nan")
        return math.copysign(math.inf, ma - mb), float("nan")
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, df


def t_test_one_tailed(a, b):
    """p-value of Welch's test for ``mean(a) > mean(b)``.

    Both samples constant with equal means give 0.5; constant with different
    means give 0.0 or 1.0.
    """
    t, df = welch_t(a, b)
    if math.isnan(df):
        if t == 0.0:
            return 0.5
        return 0.0 if t > 0 else 1.0
    return t_sf(t, df)
