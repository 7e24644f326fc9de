"""Two-user feedback code for the Gaussian MAC with a first-use abort coin.

The code spends one channel use whose output acts as a biased coin. If it
falls below ``abort_threshold`` both users stay silent; otherwise they run
Ozarow's linear scheme for ``n`` further uses at the boosted powers
``P_j/(1-eps+1/n)``. Total length is ``n + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from . import _pam
from .channel import FeedbackCode
from .errors import BlocklengthError, InfeasibleError, ParameterError
from .numerics import gaussian_capacity, normal_quantile, q_function, solve_quartic_real
from .su_codes import EXACT_THRESHOLD

_EDGE = 1e-9
_LN2 = math.log(2)


def effective_powers(P1: float, P2: float, eps: float, n=math.inf) -> tuple[float, float]:
    """``P_j/(1-eps+1/n)``; the ``1/n`` term is dropped for ``n = inf``."""
    d = 1 - eps + (0.0 if math.isinf(n) else 1.0 / n)
    return P1 / d, P2 / d


def rho_quartic(P1: float, P2: float, eps: float, n=math.inf) -> tuple:
    """Ascending coefficients of the correlation quartic.

    Its roots solve ``1+p1+p2+2x sqrt(p1 p2) = (1+p1(1-x^2))(1+p2(1-x^2))``
    with ``p_j`` the effective powers.
    """
    p1, p2 = effective_powers(P1, P2, eps, n)
    g = p1 * p2
    return (g, -2 * math.sqrt(g), -(p1 + p2 + 2 * g), 0.0, g)


def solve_rho_star(P1: float, P2: float, eps: float, n=math.inf) -> float:
    """Largest root of :func:`rho_quartic` in (0, 1), away from the endpoints by 1e-9."""
    if not (P1 > 0 and P2 > 0):
        raise ParameterError("powers must be positive")
    if not 0 <= eps < 1:
        raise ParameterError(f"eps must lie in [0, 1), got {eps!r}")
    if not math.isinf(n) and n < 1:
        raise ParameterError(f"n must be at least 1, got {n!r}")
    roots = [r for r in solve_quartic_real(rho_quartic(P1, P2, eps, n)) if _EDGE < r < 1 - _EDGE]
    if not roots:
        raise InfeasibleError(f"no correlation root in (0,1) for P1={P1}, P2={P2}, eps={eps}, n={n}")
    return roots[-1]


@dataclass(frozen=True)
class KappaBound:
    q_form: float
    chernoff_form: float


@dataclass(frozen=True)
class MessageSizes:
    """Log message counts; ``m1``/``m2`` are the nearest integers, computed on demand."""

    ln_m1: float
    ln_m2: float
    ln_m12: float

    @property
    def m1(self) -> int:
        return _nearest_int_exp(self.ln_m1)

    @property
    def m2(self) -> int:
        return _nearest_int_exp(self.ln_m2)

    @property
    def sum_residual(self) -> float:
        """Relative mismatch between ``ln_m1 + ln_m2`` and the sum-rate form."""
        return abs(self.ln_m1 + self.ln_m2 - self.ln_m12) / max(1.0, abs(self.ln_m12))


@dataclass(frozen=True)
class OzarowParams:
    n: int
    P1: float
    P2: float
    eps: float
    rho_star: float
    rho_n_star: float
    sigma_w_sq: float
    v1n: float
    v2n: float
    vartheta_n: float
    kappa_n: float
    abort_threshold: float

    @property
    def powers(self) -> tuple[float, float]:
        return effective_powers(self.P1, self.P2, self.eps, self.n)

    @property
    def abort_probability(self) -> float:
        return (self.eps - self.kappa_n) / (1 - self.kappa_n)


def _snr_terms(P1, P2, eps, n, rho):
    p1, p2 = effective_powers(P1, P2, eps, n)
    return p1 * (1 - rho * rho), p2 * (1 - rho * rho)


def _vartheta(P1, P2, eps, n, rho):
    d = 1 - eps + 1.0 / n
    v = (d / (12 * P1), d / (12 * P2))
    x = _snr_terms(P1, P2, eps, n, rho)
    return v, 2 * max(8 * v[0] * (1 + x[0]) ** 2, 8 * v[1] * (1 + x[1]) ** 2)


def _kappa_terms(v, x, n, rates):
    q_sum, ch_sum = 0.0, 0.0
    for vj, xj, rj in zip(v, x, rates):
        expo = n * (gaussian_capacity(xj) - rj)
        lead = 2 * math.sqrt(vj) * (1 + xj)
        log_arg = expo - math.log(lead)
        arg = math.exp(log_arg) if log_arg < 700 else math.inf
        q_sum += 2 * q_function(arg)
        log_sq = 2 * log_arg - math.log(2.0)
        ch_sum += math.exp(-math.exp(log_sq)) if log_sq < 700 else 0.0
    return q_sum, ch_sum


def kappa_bound(params: OzarowParams, R1n: float, R2n: float) -> KappaBound:
    """Error bound of the inner scheme at rates ``R1n``, ``R2n`` (nats per use).

    ``q_form`` sums ``2 Q(exp(n(C(x_j) - R_j)) / (2 sqrt(v_j)(1+x_j)))`` with
    ``x_j = P_j(1-rho^2)/(1-eps+1/n)``; ``chernoff_form`` replaces each
    ``2 Q(u)`` by ``exp(-u^2/2)``.
    """
    if not (R1n > 0 and R2n > 0):
        raise ParameterError("rates must be positive")
    x = _snr_terms(params.P1, params.P2, params.eps, params.n, params.rho_n_star)
    q, ch = _kappa_terms((params.v1n, params.v2n), x, params.n, (R1n, R2n))
    return KappaBound(q, ch)


def _nearest_int_exp(ln_m: float) -> int:
    if ln_m < 36:
        return max(1, round(math.exp(ln_m)))
    with mpmath.workdps(int(ln_m / math.log(10)) + 30):
        return max(1, int(mpmath.nint(mpmath.exp(mpmath.mpf(ln_m)))))


def _sizes(P1, P2, eps, n, rho, vartheta):
    x1, x2 = _snr_terms(P1, P2, eps, n, rho)
    pen = 0.5 * math.log(vartheta * math.log(n))
    ln_m1 = n * gaussian_capacity(x1) - pen
    ln_m2 = n * gaussian_capacity(x2) - pen
    p1, p2 = effective_powers(P1, P2, eps, n)
    ln_m12 = n * gaussian_capacity(p1 + p2 + 2 * rho * math.sqrt(p1 * p2)) - 2 * pen
    return ln_m1, ln_m2, ln_m12


def ozarow_params(n: int, P1: float, P2: float, eps: float) -> OzarowParams:
    """All scheme parameters at blocklength ``n`` with the default message sizing."""
    if int(n) != n or n < 2:
        raise BlocklengthError(f"blocklength must be an integer >= 2, got {n!r}")
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps!r}")
    n = int(n)
    if not 1.0 / n < eps:
        raise BlocklengthError(f"need 1/n < eps, got n={n}, eps={eps}")
    rho = solve_rho_star(P1, P2, eps)
    rho_n = solve_rho_star(P1, P2, eps, n)
    (v1, v2), vartheta = _vartheta(P1, P2, eps, n, rho_n)
    ln_m1, ln_m2, _ = _sizes(P1, P2, eps, n, rho_n, vartheta)
    x = _snr_terms(P1, P2, eps, n, rho_n)
    kappa, _ = _kappa_terms((v1, v2), x, n, (ln_m1 / n, ln_m2 / n))
    if not kappa < eps:
        raise BlocklengthError(f"error bound {kappa} is not below eps={eps}; increase n")
    return OzarowParams(n, float(P1), float(P2), float(eps), rho, rho_n, rho_n / (1 - rho_n),
                        v1, v2, vartheta, kappa, normal_quantile((eps - kappa) / (1 - kappa)))


def message_sizes(n: int, P1: float, P2: float, eps: float) -> MessageSizes:
    p = ozarow_params(n, P1, P2, eps)
    ln_m1, ln_m2, ln_m12 = _sizes(P1, P2, eps, p.n, p.rho_n_star, p.vartheta_n)
    return MessageSizes(ln_m1, ln_m2, ln_m12)


class _UserTrack:
    """Receiver estimate of one user's message, float or exact."""

    def __init__(self, m: int, a: float, log_alpha_min: float, exact: bool):
        self.m, self.a, self.exact = m, a, exact
        if exact:
            self.grid = _pam.FixedPointGrid(m, 0.5 * log_alpha_min / _LN2)

    def initial(self, y):
        # estimate y/a, i.e. value * 2^log2(1/a)
        return self.grid.to_int(y, -math.log2(self.a)) if self.exact else y / self.a

    def correct(self, est, y, gain):
        if self.exact:
            return est - self.grid.to_int(np.sign(gain) * y, math.log2(abs(gain)))
        return est - gain * y

    def decode(self, est):
        return self.grid.decode(est) if self.exact else _pam.nearest_message_float(est, self.m)


class OzarowCode(FeedbackCode):
    """Ozarow's two-user scheme behind a first-use abort coin; length ``n + 1``.

    Inner use 1 carries user 1's point, inner use 2 user 2's point, and the
    receiver adds one common ``W ~ N(0, sigma_w_sq)`` to both fed-back
    outputs, which makes the two initial estimation errors correlated with
    coefficient ``rho_n_star``. From inner use 3 on, each user sends its
    normalized estimation error at its boosted power, user 2 flipping sign
    so both inputs combine coherently, and the receiver updates both
    estimates with the joint linear MMSE gain. The error correlation then
    alternates in sign with magnitude ``rho_n_star``.

    Normalized estimation errors after each inner use are recorded as
    extras ``err1``/``err2``; ``active`` marks trials that did not abort.
    """

    aux_slots = 1

    def __init__(self, params: OzarowParams, M1: int, M2: int, exact: bool | None = None):
        if M1 < 1 or M2 < 1:
            raise ParameterError("message counts must be positive")
        self.params = params
        self.inner_n = params.n
        self.n = params.n + 1
        self.message_counts = (int(M1), int(M2))
        self.power_budgets = (params.P1, params.P2)
        p1, p2 = params.powers
        self.p = (p1, p2)
        big = max(self.message_counts) > EXACT_THRESHOLD
        self.exact = big if exact is None else bool(exact)
        self.a = tuple(math.sqrt(pj / max(_pam.theta_variance(m), 1e-300))
                       for pj, m in zip(self.p, self.message_counts))
        self._bookkeeping()
        self.tracks = [
            _UserTrack(m, a, self.log_alpha[-1][j], self.exact)
            for j, (m, a) in enumerate(zip(self.message_counts, self.a))
        ]

    def _bookkeeping(self):
        sw = self.params.sigma_w_sq
        nn = self.inner_n
        sp = np.sqrt(self.p)
        # normalized covariance after inner use 2
        log_alpha = [np.array([math.log((1 + sw) / a ** 2) for a in self.a])]
        corr = [sw / (1 + sw)]
        signs, gains, ratios = [], [], []
        for _ in range(3, nn + 1):
            c = corr[-1]
            s = 1.0 if c >= 0 else -1.0
            g = np.array([sp[0], s * sp[1]])
            sig = np.array([[1.0, c], [c, 1.0]])
            sg = sig @ g
            vy = g @ sg + 1.0
            k = sg / vy
            new = sig - np.outer(k, sg)
            r = np.array([new[0, 0], new[1, 1]])
            signs.append(s)
            gains.append(k)
            ratios.append(r)
            corr.append(new[0, 1] / math.sqrt(r[0] * r[1]))
            log_alpha.append(log_alpha[-1] + np.log(r))
        self.log_alpha = log_alpha
        self.error_corr = np.array(corr)
        self.signs, self.gains, self.ratios = signs, gains, ratios

    def error_correlation(self, k: int) -> float:
        """Correlation of the two estimation errors after inner use ``k >= 2``."""
        return float(self.error_corr[k - 2])

    def terminal_std(self) -> np.ndarray:
        return np.exp(0.5 * self.log_alpha[-1])

    def conditional_error_estimate(self) -> float:
        """Union bound on the error given no abort, from the terminal variances."""
        total = 0.0
        for m, s in zip(self.message_counts, self.terminal_std()):
            if m > 1:
                total += 2 * (m - 1) / m * q_function(1 / (2 * m * s))
        return min(1.0, total)

    def start(self, messages):
        b = len(messages[0])
        st = {"w": messages, "b": b, "active": None, "est": [None, None], "u": [None, None],
              "err1": np.zeros((b, self.n)), "err2": np.zeros((b, self.n))}
        st["theta"] = [_pam.theta_points(w, m) for w, m in zip(messages, self.message_counts)]
        if self.exact:
            st["theta_int"] = [t.grid.theta_int(w) for t, w in zip(self.tracks, messages)]
        return st

    def feedback(self, state, k, y, aux):
        v = y + math.sqrt(self.params.sigma_w_sq) * aux[:, 0] if k in (1, 2) else y
        # transmitters track the receiver's estimates from the fed-back values
        if k == 1:
            state["est"][0] = self.tracks[0].initial(v)
        elif k == 2:
            state["est"][1] = self.tracks[1].initial(v)
            for j in range(2):
                state["u"][j] = self._normalized_error(state, j, self.log_alpha[0][j])
            state["err1"][:, 2], state["err2"][:, 2] = state["u"]
        elif k >= 3:
            self._update(state, k, v)
        return v

    def _normalized_error(self, state, j, log_alpha_j):
        if self.exact:
            diff = state["est"][j] - state["theta_int"][j]
            return self.tracks[j].grid.to_float(diff, 0.5 * log_alpha_j / _LN2)
        return (state["est"][j] - state["theta"][j]) / math.exp(0.5 * log_alpha_j)

    def encode(self, state, k, past):
        x = np.zeros((state["b"], 2))
        if k == 0:
            return x
        if k == 1:
            state["active"] = past[:, 0] > self.params.abort_threshold
            x[:, 0] = self.a[0] * state["theta"][0]
        elif k == 2:
            x[:, 1] = self.a[1] * state["theta"][1]
        else:
            x[:, 0] = math.sqrt(self.p[0]) * state["u"][0]
            x[:, 1] = self.signs[k - 3] * math.sqrt(self.p[1]) * state["u"][1]
        return np.where(state["active"][:, None], x, 0.0)

    def _update(self, state, k, y):
        # joint update of inner use k >= 3
        i = k - 3
        gain, ratio = self.gains[i], self.ratios[i]
        for j in range(2):
            if self.exact:
                abs_gain = gain[j] * math.exp(0.5 * self.log_alpha[i][j])
                state["est"][j] = self.tracks[j].correct(state["est"][j], y, abs_gain)
                state["u"][j] = self._normalized_error(state, j, self.log_alpha[i + 1][j])
            else:
                state["u"][j] = (state["u"][j] - gain[j] * y) / math.sqrt(ratio[j])
        state["err1"][:, k], state["err2"][:, k] = state["u"]

    def estimates(self, fed_back):
        est = [self.tracks[0].initial(fed_back[:, 1]), self.tracks[1].initial(fed_back[:, 2])]
        for k in range(3, self.inner_n + 1):
            i = k - 3
            for j in range(2):
                g = self.gains[i][j] * math.exp(0.5 * self.log_alpha[i][j])
                est[j] = self.tracks[j].correct(est[j], fed_back[:, k], g)
        return est

    def decode(self, fed_back, messages=None):
        est = self.estimates(fed_back)
        return [t.decode(e) for t, e in zip(self.tracks, est)]

    def extras(self, state):
        return {"err1": state["err1"], "err2": state["err2"], "active": state["active"]}


def build_ozarow_code(params: OzarowParams, M1: int | None = None, M2: int | None = None,
                      exact: bool | None = None) -> OzarowCode:
    """Code with the given message counts; defaults to the standard sizing."""
    if M1 is None or M2 is None:
        sizes = message_sizes(params.n, params.P1, params.P2, params.eps)
        M1 = sizes.m1 if M1 is None else M1
        M2 = sizes.m2 if M2 is None else M2
    return OzarowCode(params, M1, M2, exact=exact)


def select_corner_point(P1: float, P2: float, eps: float, rho: float | None = None, corner: int = 1):
    """Rate pair at a corner of the pentagon for correlation ``rho`` (default ``rho*``).

    ``corner=1`` decodes user 1 last (user 1 gets its single-user maximum);
    ``corner=2`` the reverse. At ``rho*`` both corners coincide.
    """
    from .mac_bounds import pentagon

    rho = solve_rho_star(P1, P2, eps) if rho is None else rho
    pg = pentagon(P1, P2, eps, rho)
    if corner == 1:
        r1 = pg.r1_max
        return r1, min(pg.r2_max, pg.sum_max - r1)
    if corner == 2:
        r2 = pg.r2_max
        return min(pg.r1_max, pg.sum_max - r2), r2
    raise ParameterError(f"corner must be 1 or 2, got {corner!r}")


def time_share(point_a, point_b, fraction: float) -> tuple[float, float]:
    """Rates of using ``point_a`` for a ``fraction`` of the blocklength and ``point_b`` otherwise."""
    if not 0 <= fraction <= 1:
        raise ParameterError(f"fraction must lie in [0, 1], got {fraction!r}")
    return tuple(fraction * a + (1 - fraction) * b for a, b in zip(point_a, point_b))
