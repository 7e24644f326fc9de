"""Achievability and converse evaluators for the single-user channel.

Both evaluators return explicit expressions without the unspecified
remainder terms, so they are concrete curves rather than asymptotic claims.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import DomainError, ParameterError
from .numerics import (berry_esseen_stats, gaussian_capacity, nested_log, normal_quantile)


@dataclass(frozen=True)
class BoundPoint:
    n: int
    ln_m_lower: float
    ln_m_upper: float


@dataclass(frozen=True)
class ConverseIngredients:
    """Quantities entering the converse at blocklength ``n``.

    ``q`` and ``gamma`` depend on each other; they are the fixed point of
    ``q = P/(1-eps-gamma/sqrt(n))`` and ``gamma = 2 t_bound(q)/sigma(q)^3 + 1``.
    ``vacuous`` is set when ``1 - eps - gamma/sqrt(n) <= 0``.
    """

    n: float
    q: float
    gamma: float
    sigma: float
    t_bound: float
    zeta_n: float
    tau_n: float
    vacuous: bool = False


def epsilon_capacity(P: float, eps: float) -> float:
    """``C(P/(1-eps))``."""
    if not 0 <= eps < 1:
        raise DomainError(f"eps must lie in [0, 1), got {eps!r}")
    return gaussian_capacity(P / (1 - eps))


def _check(P, eps):
    if not (P > 0 and math.isfinite(P)):
        raise ParameterError(f"P must be positive, got {P!r}")
    if not 0 <= eps < 1:
        raise DomainError(f"eps must lie in [0, 1), got {eps!r}")


def achievable_log_m(n: float, P: float, eps: float, L: int = 1) -> float:
    """Explicit lower expansion of the log code size.

    ``n C(P/(1-eps+1/n)) (1 - L/n) - 2^(L-1) ln_(L+1)(n) + ln((1-1/n)/(1-eps))``.
    Needs ``ln_(L+1)(n) >= 1`` and ``1/n < eps``.
    """
    _check(P, eps)
    if int(L) != L or L < 1:
        raise ParameterError(f"L must be a positive integer, got {L!r}")
    if not 1.0 / n < eps:
        raise DomainError(f"need 1/n < eps, got n={n}, eps={eps}")
    try:
        nl = nested_log(L + 1, n)
    except DomainError as exc:
        raise DomainError(f"achievable_log_m(n={n}, L={L}): {exc}") from None
    if nl < 1:
        raise DomainError(f"achievable_log_m(n={n}, L={L}): n is below exp_(L+1)(1)")
    cap = gaussian_capacity(P / (1 - eps + 1.0 / n))
    return n * cap * (1 - L / n) - 2 ** (L - 1) * nl + math.log((1 - 1.0 / n) / (1 - eps))


def converse_ingredients(n: float, P: float, eps: float, max_iter: int = 200) -> ConverseIngredients:
    """Solve the ``q``/``gamma`` fixed point at blocklength ``n``."""
    _check(P, eps)
    if n < 2:
        raise DomainError(f"converse needs n >= 2, got {n!r}")
    rn = math.sqrt(n)
    tau = normal_quantile(1 - 1 / rn)
    q = P / (1 - eps)
    for _ in range(max_iter):
        st = berry_esseen_stats(q)
        gamma = 2 * st.ratio + 1
        denom = 1 - eps - gamma / rn
        if denom <= 0:
            return ConverseIngredients(n, math.inf, gamma, st.sigma, st.t_bound, math.inf, tau, True)
        q_new = P / denom
        if abs(q_new - q) <= 1e-14 * q:
            q = q_new
            break
        q = q_new
    st = berry_esseen_stats(q)
    gamma = 2 * st.ratio + 1
    zeta = n * gaussian_capacity(q) + st.sigma * rn * tau
    return ConverseIngredients(n, q, gamma, st.sigma, st.t_bound, zeta, tau,
                               1 - eps - gamma / rn <= 0)


def converse_log_m(n: float, P: float, eps: float, shift: int = 1) -> float:
    """Upper bound on the log code size at blocklength ``n``; ``inf`` when vacuous.

    The expression ``m C(q) + sigma sqrt(m) tau_m - ln(t_bound/(sigma^3 sqrt(m)))``
    bounds the code size at blocklength ``m - 1``. With the default
    ``shift=1`` the bound for ``n`` is evaluated at ``m = n + 1``; ``shift=0``
    returns the raw expression at ``m = n``.
    """
    m = n + shift
    ing = converse_ingredients(m, P, eps)
    if ing.vacuous:
        return math.inf
    return ing.zeta_n - math.log(ing.t_bound / (ing.sigma ** 3 * math.sqrt(m)))


def bound_point(n: float, P: float, eps: float, L: int = 1) -> BoundPoint:
    return BoundPoint(int(n), achievable_log_m(n, P, eps, L), converse_log_m(n, P, eps))


def sandwich_crossover(ns, P: float, eps: float, L: int = 1):
    """Smallest grid ``n`` from which the lower curve stays below the upper one.

    Grid points where either curve is undefined count as violations.
    Returns ``None`` if even the last point violates.
    """
    ok = []
    for n in ns:
        try:
            ok.append(achievable_log_m(n, P, eps, L) <= converse_log_m(n, P, eps))
        except DomainError:
            ok.append(False)
    n0 = None
    for n, good in zip(reversed(list(ns)), reversed(ok)):
        if not good:
            break
        n0 = n
    return n0


def write_curve_csv(path, ns, P: float, eps: float, L: int = 1) -> list[dict]:
    """CSV rows (n, lower, upper, lower/n, upper/n, eps_capacity); undefined lower bounds are blank, a vacuous converse is inf."""
    rows = []
    cap = epsilon_capacity(P, eps)
    for n in ns:
        try:
            lo = achievable_log_m(n, P, eps, L)
        except DomainError:
            lo = math.nan
        up = converse_log_m(n, P, eps)
        rows.append({"n": n, "lower": lo, "upper": up, "lower_per_n": lo / n,
                     "upper_per_n": up / n, "eps_capacity": cap})
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()})
    return rows
