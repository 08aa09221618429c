"""Wigner 3j/6j symbols and Clebsch-Gordan coefficients (Condon-Shortley phase).

Arguments may be integers or half-integers given as floats. Internally every
angular momentum is doubled so the Racah sums run over exact integers.
"""

from functools import lru_cache
from math import factorial, sqrt


def _twice(x):
    t = round(2 * x)
    if abs(t - 2 * x) > 1e-9:
        raise ValueError(f"{x} is not a multiple of 1/2")
    return int(t)


def _triangle(a2, b2, c2):
    """Doubled triangle condition incl. integer perimeter."""
    return (
        c2 >= abs(a2 - b2)
        and c2 <= a2 + b2
        and (a2 + b2 + c2) % 2 == 0
    )


def _delta(a2, b2, c2):
    return sqrt(
        factorial((a2 + b2 - c2) // 2)
        * factorial((a2 - b2 + c2) // 2)
        * factorial((-a2 + b2 + c2) // 2)
        / factorial((a2 + b2 + c2) // 2 + 1)
    )


@lru_cache(maxsize=None)
def _wigner3j2(j1, j2, j3, m1, m2, m3):
    if m1 + m2 + m3 != 0:
        return 0.0
    if not _triangle(j1, j2, j3):
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if (j1 + m1) % 2 or (j2 + m2) % 2 or (j3 + m3) % 2:
        return 0.0
    # Racah formula, all quantities halved back to integers
    a = (j1 + j2 - j3) // 2
    b = (j1 - m1) // 2
    c = (j2 + m2) // 2
    d = (j3 - j2 + m1) // 2
    e = (j3 - j1 - m2) // 2
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    s = 0.0
    for k in range(kmin, kmax + 1):
        s += (-1) ** k / (
            factorial(k)
            * factorial(a - k)
            * factorial(b - k)
            * factorial(c - k)
            * factorial(d + k)
            * factorial(e + k)
        )
    pre = _delta(j1, j2, j3) * sqrt(
        factorial((j1 + m1) // 2)
        * factorial((j1 - m1) // 2)
        * factorial((j2 + m2) // 2)
        * factorial((j2 - m2) // 2)
        * factorial((j3 + m3) // 2)
        * factorial((j3 - m3) // 2)
    )
    phase = -1 if ((j1 - j2 - m3) // 2) % 2 else 1
    return phase * pre * s


def wigner_3j(j1, j2, j3, m1, m2, m3):
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3)."""
    return _wigner3j2(*(_twice(x) for x in (j1, j2, j3, m1, m2, m3)))


@lru_cache(maxsize=None)
def _wigner6j2(j1, j2, j3, j4, j5, j6):
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return 0.0
    pre = 1.0
    for t in triads:
        pre *= _delta(*t)
    sums = [sum(t) // 2 for t in triads]
    tops = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    s = 0.0
    for k in range(max(sums), min(tops) + 1):
        den = factorial(tops[0] - k) * factorial(tops[1] - k) * factorial(tops[2] - k)
        for v in sums:
            den *= factorial(k - v)
        s += (-1) ** k * factorial(k + 1) / den
    return pre * s


def wigner_6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}."""
    return _wigner6j2(*(_twice(x) for x in (j1, j2, j3, j4, j5, j6)))


def clebsch_gordan(j1, m1, j2, m2, j, m):
    """<j1 m1; j2 m2 | j m>.

    Zero whenever m != m1 + m2 or j violates the triangle rule.
    """
    j1_2, j2_2, m_2 = _twice(j1), _twice(j2), _twice(m)
    w = _wigner3j2(j1_2, j2_2, _twice(j), _twice(m1), _twice(m2), -m_2)
    if w == 0.0:
        return 0.0
    phase = -1 if ((j1_2 - j2_2 + m_2) // 2) % 2 else 1
    return phase * sqrt(2 * j + 1) * w
