"""Special functions, nested logarithms, quartic roots and Berry-Esseen moments.

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import DegenerateInputError, DomainError

# absolute moments of a standard normal used by the third-moment bound
_Z6_MOMENT = 15.0
_ABS_Z3_MOMENT = 2.0 * math.sqrt(2.0 / math.pi)


def _check_snr(x, name="snr"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    if np.any(arr < 0):
        raise DomainError(f"{name} must be nonnegative, got {x!r}")
    return arr


def gaussian_capacity(snr):
    """Capacity ``0.5*ln(1+snr)`` of the unit-noise AWGN channel, in nats."""
    arr = _check_snr(snr)
    out = 0.5 * np.log1p(arr)
    return float(out) if out.ndim == 0 else out


def gaussian_dispersion(snr):
    """Dispersion ``x(x+2)/(2(x+1)^2)`` of the unit-noise AWGN channel, in nats^2."""
    x = _check_snr(snr)
    out = x * (x + 2.0) / (2.0 * (x + 1.0) ** 2)
    return float(out) if out.ndim == 0 else out


def normal_cdf(u):
    out = special.ndtr(u)
    return float(out) if np.ndim(out) == 0 else out


def q_function(u):
    """Upper tail ``1 - normal_cdf(u)``, computed without cancellation."""
    out = special.ndtr(-np.asarray(u, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise DomainError(f"quantile needs p in (0, 1), got {p!r}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def nested_log(k: int, x: float) -> float:
    """Apply the natural logarithm ``k`` times.

    Raises :class:`DomainError` naming the level whose argument is not positive.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"nesting depth must be a positive integer, got {k!r}")
    val = float(x)
    for level in range(1, int(k) + 1):
        if not val > 0.0:
            raise DomainError(
                f"nested log of depth {k}: argument {val!r} at level {level} is not positive"
            )
        val = math.log(val)
    return val


def nested_log_pow(k: int, x: float, exponent: float) -> float:
    """``nested_log(k, x**exponent)`` evaluated without forming the power."""
    if x <= 0 or exponent <= 0:
        raise DomainError("nested_log_pow needs positive base and exponent")
    first = exponent * math.log(x)
    if k == 1:
        return first
    try:
        return nested_log(k - 1, first)
    except DomainError as exc:
        raise DomainError(f"nested log of depth {k} of {x}^{exponent}: {exc}") from None


def nested_exp(k: int, t: float) -> float:
    """Apply the exponential ``k`` times."""
    if int(k) != k or k < 1:
        raise DomainError(f"nesting depth must be a positive integer, got {k!r}")
    val = float(t)
    for level in range(1, int(k) + 1):
        try:
            val = math.exp(val)
        except OverflowError:
            raise DomainError(f"nested exp of depth {k} overflows at level {level}") from None
    return val


class QuarticCoeffs(NamedTuple):
    """Coefficients of ``a0 + a1 z + a2 z^2 + a3 z^3 + a4 z^4``."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float


def _poly_eval(asc, z):
    acc = 0.0
    for c in reversed(asc):
        acc = acc * z + c
    return acc


def _poly_scale(asc, z):
    return sum(abs(c) * abs(z) ** j for j, c in enumerate(asc))


def quartic_residual_ok(coeffs: Sequence[float], r: float, tol: float = 1e-9) -> bool:
    asc = [float(c) for c in coeffs]
    return abs(_poly_eval(asc, r)) <= tol * max(1.0, _poly_scale(asc, r))


def solve_quartic_real(coeffs: Sequence[float], tol: float = 1e-9) -> list[float]:
    """Real roots of a polynomial of degree at most four, ascending, with multiplicity.

    ``coeffs`` is ``(a0, a1, a2, a3, a4)`` in ascending powers. A zero leading
    coefficient is allowed and lowers the degree. The roots come from the
    companion-matrix eigenvalues, are polished by Newton steps, and every
    returned root satisfies the relative residual test with ``tol``.
    """
    asc = [float(c) for c in coeffs]
    if len(asc) != 5:
        raise DomainError(f"expected 5 coefficients, got {len(asc)}")
    if not all(math.isfinite(c) for c in asc):
        raise DomainError("quartic coefficients must be finite")
    while asc and asc[-1] == 0.0:
        asc.pop()
    if not asc:
        raise DegenerateInputError("all quartic coefficients are zero")
    if len(asc) == 1:
        return []
    deriv = [j * c for j, c in enumerate(asc)][1:]
    eig = np.roots(asc[::-1])
    roots = []
    for lam in eig:
        if abs(lam.imag) > 1e-3 * max(1.0, abs(lam)):
            continue
        r = float(lam.real)
        best, best_res = r, abs(_poly_eval(asc, r))
        for _ in range(8):
            d = _poly_eval(deriv, r)
            if d == 0.0:
                break
            r = r - _poly_eval(asc, r) / d
            res = abs(_poly_eval(asc, r))
            if res < best_res:
                best, best_res = r, res
            if res == 0.0:
                break
        if best_res <= tol * max(1.0, _poly_scale(asc, best)):
            roots.append(best)
    return sorted(roots)


@dataclass(frozen=True)
class BerryEsseenStats:
    mu: float
    sigma: float
    t_bound: float

    @property
    def ratio(self) -> float:
        """``t_bound / sigma**3``, the constant in front of ``1/sqrt(n)``."""
        return self.t_bound / self.sigma ** 3


def berry_esseen_stats(q: float) -> BerryEsseenStats:
    """Mean, standard deviation and third-moment bound of one information-density term.

    The term is ``(-q Z^2 + 2 sqrt(q) Z + q) / (2(1+q))`` with ``Z`` standard normal.
    """
    if not (math.isfinite(q) and q > 0):
        raise DomainError(f"q must be positive, got {q!r}")
    sigma = math.sqrt(gaussian_dispersion(q))
    num = q * _Z6_MOMENT ** (1 / 3) + 2 * math.sqrt(q) * _ABS_Z3_MOMENT ** (1 / 3) + q
    t_bound = (num / (2 * (1 + q))) ** 3
    return BerryEsseenStats(mu=0.0, sigma=sigma, t_bound=t_bound)
