"""Rate regions and converse machinery for the two-user Gaussian MAC with feedback."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import McEstimate
from .errors import ArityError, ParameterError, ShapeError
from .mac_codes import solve_rho_star
from .numerics import gaussian_capacity

_TOL = 1e-12


@dataclass(frozen=True)
class Pentagon:
    rho: float
    r1_max: float
    r2_max: float
    sum_max: float

    def contains(self, r1: float, r2: float, tol: float = 0.0) -> bool:
        return r1 <= self.r1_max + tol and r2 <= self.r2_max + tol and r1 + r2 <= self.sum_max + tol

    def corners(self) -> list[tuple[float, float]]:
        return [(self.r1_max, min(self.r2_max, max(self.sum_max - self.r1_max, 0.0))),
                (min(self.r1_max, max(self.sum_max - self.r2_max, 0.0)), self.r2_max)]


def pentagon(P1: float, P2: float, eps: float, rho: float) -> Pentagon:
    """Rate constraints for input correlation ``rho`` in [-1, 1]."""
    if not -1 <= rho <= 1:
        raise ParameterError(f"rho must lie in [-1, 1], got {rho!r}")
    if not 0 <= eps < 1:
        raise ParameterError(f"eps must lie in [0, 1), got {eps!r}")
    d = 1 - eps
    s = 1 - rho * rho
    total = max(P1 + P2 + 2 * rho * math.sqrt(P1 * P2), 0.0)
    return Pentagon(rho, gaussian_capacity(P1 * s / d), gaussian_capacity(P2 * s / d),
                    gaussian_capacity(total / d))


@dataclass
class RateRegion:
    """Union of pentagons over ``rho_grid`` with its upper-right boundary."""

    P1: float
    P2: float
    eps: float
    rho_grid: np.ndarray
    r1_max: np.ndarray
    r2_max: np.ndarray
    sum_max: np.ndarray
    boundary: np.ndarray = field(default=None)

    def pentagons(self) -> list[Pentagon]:
        return [Pentagon(float(r), float(a), float(b), float(c))
                for r, a, b, c in zip(self.rho_grid, self.r1_max, self.r2_max, self.sum_max)]


def _pareto(points: np.ndarray) -> np.ndarray:
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    front, best = [], -math.inf
    for p in points[order]:
        if p[1] > best:
            front.append(p)
            best = p[1]
    return np.array(front[::-1])


def region_from_grid(P1: float, P2: float, eps: float, rho_grid) -> RateRegion:
    rho_grid = np.asarray(rho_grid, dtype=float)
    pents = [pentagon(P1, P2, eps, float(r)) for r in rho_grid]
    reg = RateRegion(P1, P2, eps, rho_grid,
                     np.array([p.r1_max for p in pents]),
                     np.array([p.r2_max for p in pents]),
                     np.array([p.sum_max for p in pents]))
    corners = np.array([c for p in pents for c in p.corners()])
    reg.boundary = _pareto(corners)
    return reg


def region(P1: float, P2: float, eps: float, rho_grid_size: int = 1001) -> RateRegion:
    """Pentagons on a uniform grid over [0, 1] plus the exact ``rho*`` (``size + 1`` rows)."""
    if int(rho_grid_size) != rho_grid_size or rho_grid_size < 2:
        raise ParameterError(f"grid size must be an integer >= 2, got {rho_grid_size!r}")
    grid = np.linspace(0.0, 1.0, int(rho_grid_size))
    rs = solve_rho_star(P1, P2, eps)
    grid = np.sort(np.append(grid, rs))
    return region_from_grid(P1, P2, eps, grid)


def contains(reg: RateRegion, point, tol: float = 0.0) -> bool:
    """True when ``point`` satisfies all three constraints of some pentagon."""
    r1, r2 = point
    ok = (r1 <= reg.r1_max + tol) & (r2 <= reg.r2_max + tol) & (r1 + r2 <= reg.sum_max + tol)
    return bool(np.any(ok))


def write_region_csv(path, reg: RateRegion) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "r1_max", "r2_max", "sum_max"])
        for row in zip(reg.rho_grid, reg.r1_max, reg.r2_max, reg.sum_max):
            w.writerow([repr(float(v)) for v in row])
    return len(reg.rho_grid)


def write_boundary_csv(path, reg: RateRegion) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r1", "r2"])
        for r1, r2 in reg.boundary:
            w.writerow([repr(float(r1)), repr(float(r2))])
    return len(reg.boundary)


@dataclass
class PerSymbolStats:
    """Per-use second moments ``p1``, ``p2`` and correlations ``rho`` (k = 1..n)."""

    p1: np.ndarray
    p2: np.ndarray
    rho: np.ndarray
    degenerate: np.ndarray | None = None
    p1_se: np.ndarray | None = None
    p2_se: np.ndarray | None = None
    rho_se: np.ndarray | None = None
    trials: int = 0

    def __post_init__(self):
        self.p1 = np.asarray(self.p1, dtype=float)
        self.p2 = np.asarray(self.p2, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if not (self.p1.shape == self.p2.shape == self.rho.shape) or self.p1.ndim != 1:
            raise ShapeError("p1, p2 and rho must be 1-D arrays of equal length")
        if self.degenerate is None:
            self.degenerate = (self.p1 < 1e-12) | (self.p2 < 1e-12)
        self.degenerate = np.asarray(self.degenerate, dtype=bool)

    @property
    def n(self) -> int:
        return len(self.p1)

    def cross_moments(self) -> np.ndarray:
        """``rho_k sqrt(p1_k p2_k)``, zero where degenerate."""
        r = np.where(self.degenerate, 0.0, np.nan_to_num(self.rho))
        return r * np.sqrt(self.p1 * self.p2)

    def rho_clean(self) -> np.ndarray:
        return np.where(self.degenerate, 0.0, np.nan_to_num(self.rho))


@dataclass(frozen=True)
class SingleLetterResult:
    rho: float
    abs_rho_ok: bool
    user1_ok: bool
    user2_ok: bool
    sum_ok: bool
    premises_ok: bool
    failed_premises: tuple = ()

    @property
    def all_ok(self) -> bool:
        return self.abs_rho_ok and self.user1_ok and self.user2_ok and self.sum_ok


def single_letter_rho(stats: PerSymbolStats, P1: float, P2: float) -> SingleLetterResult:
    """Combine per-use correlations into one coefficient and check its inequalities.

    ``rho = sum_k rho_k sqrt(p1_k p2_k) / (n sqrt(P1 P2))``. The checks are
    ``|rho| <= 1``, ``sum p1_k(1-rho_k^2) <= n P1 (1-rho^2)``, the same for user 2,
    and ``sum (p1_k + p2_k + 2 rho_k sqrt(p1_k p2_k)) <= n (P1 + P2 + 2 rho sqrt(P1 P2))``.
    They are guaranteed only when the power constraints hold; ``failed_premises``
    names any that do not.
    """
    if stats.n == 0:
        raise ArityError("empty statistics")
    if np.any(stats.degenerate):
        warnings.warn(f"{int(np.sum(stats.degenerate))} degenerate uses excluded from the correlation sum")
    n = stats.n
    failed = []
    if np.sum(stats.p1) > n * P1 * (1 + _TOL):
        failed.append("power1")
    if np.sum(stats.p2) > n * P2 * (1 + _TOL):
        failed.append("power2")
    if np.any(np.abs(stats.rho_clean()) > 1 + _TOL):
        failed.append("rho_k")
    cross = stats.cross_moments()
    rho = float(np.sum(cross) / (n * math.sqrt(P1 * P2)))
    rk2 = stats.rho_clean() ** 2
    lhs1 = float(np.sum(stats.p1 * (1 - rk2)))
    lhs2 = float(np.sum(stats.p2 * (1 - rk2)))
    lhs3 = float(np.sum(stats.p1 + stats.p2 + 2 * cross))

    def le(a, b):
        return a <= b + _TOL * max(1.0, abs(b))

    return SingleLetterResult(
        rho=rho,
        abs_rho_ok=abs(rho) <= 1 + _TOL,
        user1_ok=le(lhs1, n * P1 * (1 - rho * rho)),
        user2_ok=le(lhs2, n * P2 * (1 - rho * rho)),
        sum_ok=le(lhs3, n * (P1 + P2 + 2 * rho * math.sqrt(P1 * P2))),
        premises_ok=not failed,
        failed_premises=tuple(failed),
    )


def _cross_coeffs(stats: PerSymbolStats):
    # E[X1 X2]/P2k and E[X1 X2]/P1k, zero where degenerate
    cross = stats.cross_moments()
    with np.errstate(divide="ignore", invalid="ignore"):
        c12 = np.where(stats.degenerate, 0.0, cross / stats.p2)
        c21 = np.where(stats.degenerate, 0.0, cross / stats.p1)
    return c12, c21


def atypical_statistics(x: np.ndarray, T: float, stats: PerSymbolStats, P1: float, P2: float,
                        rho: float | None = None) -> np.ndarray:
    """Per-trial values of the three event statistics; the events hold where they are negative.

    ``x`` has shape ``(trials, n, 2)``. Returns ``(trials, 3)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != 2:
        raise ShapeError("inputs must have shape (trials, n, 2)")
    if x.shape[1] != stats.n:
        raise ShapeError(f"inputs have n={x.shape[1]} but stats have n={stats.n}")
    n = stats.n
    rho = single_letter_rho(stats, P1, P2).rho if rho is None else rho
    c12, c21 = _cross_coeffs(stats)
    x1, x2 = x[:, :, 0], x[:, :, 1]
    s1 = np.sum((x1 - x2 * c12) ** 2, axis=1) - n * P1 * T * (1 - rho * rho)
    s2 = np.sum((x2 - x1 * c21) ** 2, axis=1) - n * P2 * T * (1 - rho * rho)
    s3 = np.sum((x1 + x2) ** 2, axis=1) - n * (P1 * T + P2 * T + 2 * rho * T * math.sqrt(P1 * P2))
    return np.stack([s1, s2, s3], axis=1)


def atypical_event_rate(transcripts, T: float, stats: PerSymbolStats, P1: float, P2: float,
                        seed: int = 0, rho: float | None = None) -> list[McEstimate]:
    """Empirical frequencies of the complements of the three typicality events.

    ``transcripts`` is an input array ``(trials, n, 2)`` or a channel batch.
    Each frequency is at most ``1/T`` for codes meeting the power constraints.
    """
    x = transcripts.x if hasattr(transcripts, "x") else transcripts
    vals = atypical_statistics(x, T, stats, P1, P2, rho)
    trials = vals.shape[0]
    return [McEstimate.from_counts(int(np.sum(vals[:, j] >= 0)), trials, seed) for j in range(3)]


@dataclass(frozen=True)
class VMoments:
    mean: tuple
    second: tuple


def v_moments(stats: PerSymbolStats, T: float, rho: float, P1: float, P2: float) -> VMoments:
    """Closed-form first and second moments of the three centred statistics.

    ``E[V1^2] = 2 n P1^2 T^2 (1-rho^2)^2 + 4 sum p1_k (1-rho_k^2)``, the same
    for user 2, and ``E[V3^2] = 4 sum (p1_k + p2_k + 2 rho_k sqrt(p1_k p2_k))
    + 2 n T^2 (P1 + P2 + 2 rho sqrt(P1 P2))^2``.
    """
    n = stats.n
    rk2 = stats.rho_clean() ** 2
    s = 1 - rho * rho
    e1 = 2 * n * P1 ** 2 * T ** 2 * s ** 2 + 4 * float(np.sum(stats.p1 * (1 - rk2)))
    e2 = 2 * n * P2 ** 2 * T ** 2 * s ** 2 + 4 * float(np.sum(stats.p2 * (1 - rk2)))
    tot = T * (P1 + P2 + 2 * rho * math.sqrt(P1 * P2))
    e3 = 4 * float(np.sum(stats.p1 + stats.p2 + 2 * stats.cross_moments())) + 2 * n * tot ** 2
    return VMoments((0.0, 0.0, 0.0), (e1, e2, e3))


def v_statistics(x: np.ndarray, z: np.ndarray, T: float, rho: float, stats: PerSymbolStats,
                 P1: float, P2: float) -> np.ndarray:
    """Sampled ``(V1, V2, V3)`` for inputs ``x`` (trials, n, 2) and noise ``z`` (trials, n)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape[:2] != z.shape or x.shape[1] != stats.n:
        raise ShapeError("inputs, noise and stats must share the blocklength")
    n = stats.n
    s = 1 - rho * rho
    c12, c21 = _cross_coeffs(stats)
    x1, x2 = x[:, :, 0], x[:, :, 1]
    zz = np.sum(z * z, axis=1)
    v1 = -P1 * T * s * zz + 2 * np.sum(z * (x1 - c12 * x2), axis=1) + n * P1 * T * s
    v2 = -P2 * T * s * zz + 2 * np.sum(z * (x2 - c21 * x1), axis=1) + n * P2 * T * s
    tot = T * (P1 + P2 + 2 * rho * math.sqrt(P1 * P2))
    v3 = 2 * np.sum((x1 + x2) * z, axis=1) - tot * zz + n * tot
    return np.stack([v1, v2, v3], axis=1)


@dataclass(frozen=True)
class ConverseConstants:
    c1: float
    c2: float
    c12: float

    @property
    def c_max(self) -> float:
        return max(self.c1, self.c2, self.c12)


@dataclass(frozen=True)
class ConverseParams:
    n: float
    T: float
    constants: ConverseConstants
    ln_gamma: tuple
    rho: float
    vacuous: bool


@dataclass(frozen=True)
class MacConverseBounds:
    ln_m1: float
    ln_m2: float
    ln_m12: float
    params: ConverseParams

    @property
    def vacuous(self) -> bool:
        return self.params.vacuous


def default_constants(P1: float, P2: float, eps: float, rho: float, samples: int = 201) -> ConverseConstants:
    """Constants of the ``n^(-1/3)`` terms from the explicit Chebyshev fractions.

    Each fraction depends on ``T``; the maximum over ``T`` in
    ``[1/(1-eps), 2/(1-eps)]`` is taken so that the constants do not depend
    on the ``T`` they help choose.
    """
    t = np.linspace(1 / (1 - eps), 2 / (1 - eps), samples)
    s = 1 - rho * rho

    def single(P):
        a = P * s
        return float(np.max((2 * a * a * t * t + 4 * a) / (4 * (1 + a * t) ** 2)))

    tot = P1 + P2 + 2 * rho * math.sqrt(P1 * P2)
    c12 = float(np.max((4 * tot + 2 * (t * tot) ** 2)
                       / (1 + t * (P1 + P2) + 2 * rho * math.sqrt(P1 * P2)) ** 2))
    return ConverseConstants(single(P1), single(P2), c12)


def info_spectrum_upper_bounds(n: float, P1: float, P2: float, eps: float, rho: float,
                               c1: float | None = None, c2: float | None = None,
                               c12: float | None = None) -> MacConverseBounds:
    """Upper bounds on ``ln M1``, ``ln M2`` and ``ln M1 M2`` at blocklength ``n``.

    ``T = 1/(1-eps-(c_max+1) n^(-1/3))``; each bound is
    ``(n/2) ln(1 + snr_j(T)) + n^(2/3) - ln(1 - eps - 1/T - c_j n^(-1/3))``.
    The result is flagged vacuous (with infinite bounds) when ``T`` falls
    outside ``[1/(1-eps), 2/(1-eps)]`` or a log argument is not positive.
    """
    if not 0 <= eps < 1:
        raise ParameterError(f"eps must lie in [0, 1), got {eps!r}")
    if not -1 <= rho <= 1:
        raise ParameterError(f"rho must lie in [-1, 1], got {rho!r}")
    dflt = default_constants(P1, P2, eps, rho)
    consts = ConverseConstants(dflt.c1 if c1 is None else c1, dflt.c2 if c2 is None else c2,
                               dflt.c12 if c12 is None else c12)
    m13 = n ** (-1 / 3)
    denom = 1 - eps - (consts.c_max + 1) * m13
    vac = ConverseParams(n, math.inf, consts, (math.inf,) * 3, rho, True)
    if denom <= 0:
        return MacConverseBounds(math.inf, math.inf, math.inf, vac)
    T = 1 / denom
    if not (1 / (1 - eps) <= T <= 2 / (1 - eps)):
        return MacConverseBounds(math.inf, math.inf, math.inf, vac)
    s = 1 - rho * rho
    n23 = n ** (2 / 3)
    lg = (0.5 * n * math.log1p(P1 * T * s) + n23,
          0.5 * n * math.log1p(P2 * T * s) + n23,
          0.5 * n * math.log1p(P1 * T + P2 * T + 2 * rho * T * math.sqrt(P1 * P2)) + n23)
    out = []
    for g, c in zip(lg, (consts.c1, consts.c2, consts.c12)):
        arg = 1 - eps - 1 / T - c * m13
        if arg <= 0:
            return MacConverseBounds(math.inf, math.inf, math.inf, vac)
        out.append(g - math.log(arg))
    return MacConverseBounds(*out, ConverseParams(n, T, consts, lg, rho, False))
