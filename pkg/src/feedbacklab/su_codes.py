"""Single-user feedback codes.

* :class:`SchalkwijkKailathCode`: linear feedback code on a PAM grid.
* :func:`build_power_controlled_code`: sends a boosted inner code for a
  ``(1-eps)/(1-eps_n)`` fraction of the messages and silence for the rest.
* :class:`TruncatedCode`: turns an expected-power code into one whose encoder
  stops once the energy already spent exceeds a budget.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np

from . import _pam
from .channel import FeedbackCode, message_array
from .errors import BlocklengthError, DomainError, ParameterError
from .numerics import nested_exp, nested_log, nested_log_pow, normal_quantile, q_function

# above this many messages the receiver estimate is kept in exact integers
EXACT_THRESHOLD = 1 << 30


@dataclass
class SkState:
    """Per-batch encoder state of the SK code."""

    theta: np.ndarray
    theta_hat: np.ndarray | None
    err_var: float
    k: int
    theta_int: np.ndarray | None = None
    u: np.ndarray | None = None


class SchalkwijkKailathCode(FeedbackCode):
    """Schalkwijk-Kailath code with ``m`` messages over ``n`` uses at power ``power``.

    The first use sends ``a*theta`` with ``a`` chosen so that the expected
    power is ``power``. Use ``k > 1`` sends ``sqrt(power)`` times the receiver's
    current estimation error divided by its standard deviation, and the
    receiver applies the linear MMSE correction. The terminal error is
    Gaussian with variance ``err_var(n)``.

    In floating mode the transmitter tracks the normalized error through a
    contracting recursion, which keeps the transmit power exact but limits
    the resolution of the receiver estimate to about 1e-16. Codes with more
    than ``EXACT_THRESHOLD`` messages (or ``exact=True``) keep the receiver
    estimate as exact integers instead.
    """

    def __init__(self, n: int, m: int, power: float, exact: bool | None = None):
        if int(n) != n or n < 1:
            raise ParameterError(f"blocklength must be a positive integer, got {n!r}")
        if int(m) != m or m < 1:
            raise ParameterError(f"message count must be a positive integer, got {m!r}")
        if not (power > 0 and math.isfinite(power)):
            raise ParameterError(f"power must be positive, got {power!r}")
        self.n = int(n)
        self.m = int(m)
        self.power = float(power)
        self.message_counts = (self.m,)
        self.power_budgets = (self.power,)
        self.exact = self.m > EXACT_THRESHOLD if exact is None else bool(exact)
        if self.m == 1:
            self.exact = False
            self.a = 0.0
            self.log_sigma = np.zeros(self.n + 1)
            return
        var_theta = _pam.theta_variance(self.m)
        self.a = math.sqrt(self.power / var_theta)
        # log standard deviation after use k, index 1..n, by the MMSE recursion
        shrink = 0.5 * math.log1p(-self.power / (1 + self.power))
        log_sigma = np.empty(self.n + 1)
        log_sigma[0] = math.nan
        log_sigma[1] = 0.5 * math.log(var_theta / self.power)
        for k in range(2, self.n + 1):
            log_sigma[k] = log_sigma[k - 1] + shrink
        self.log_sigma = log_sigma
        self._gain_log = 0.5 * math.log(self.power) - math.log1p(self.power)
        if self.exact:
            self.grid = _pam.FixedPointGrid(self.m, log_sigma[self.n] / math.log(2))
        else:
            gains = np.zeros(self.n)
            gains[1:] = np.exp(self._gain_log + log_sigma[1:self.n])
            self._gains = gains

    def err_var(self, k: int) -> float:
        """Estimation variance after use ``k`` (1-based)."""
        return math.exp(2 * self.log_sigma[k])

    @property
    def spacing(self) -> float:
        return 1.0 / self.m

    def _q_arg(self) -> float:
        return self.spacing / (2 * math.exp(self.log_sigma[self.n]))

    def analytic_error(self) -> float:
        """Exact error probability ``2(M-1)/M * Q(spacing / (2 sigma_n))``."""
        if self.m == 1:
            return 0.0
        return 2 * (self.m - 1) / self.m * q_function(self._q_arg())

    def error_bound(self) -> float:
        """The grid-independent bound ``2 Q(spacing / (2 sigma_n))``."""
        if self.m == 1:
            return 0.0
        return min(1.0, 2 * q_function(self._q_arg()))

    def start(self, messages):
        w = messages[0]
        theta = _pam.theta_points(w, self.m)
        st = SkState(theta=theta, theta_hat=None, err_var=math.inf, k=0)
        if self.exact:
            st.theta_int = self.grid.theta_int(w)
        return st

    def encode(self, state: SkState, k: int, past: np.ndarray) -> np.ndarray:
        b = len(state.theta)
        if self.m == 1:
            return np.zeros((b, 1))
        if k == 0:
            state.k = 0
            return (self.a * state.theta)[:, None]
        y = past[:, k - 1]
        sp = math.sqrt(self.power)
        if self.exact:
            if k == 1:
                state.theta_hat = self.grid.to_int(y, self.log_sigma[1] / math.log(2))
            else:
                corr = self.grid.to_int(y, (self._gain_log + self.log_sigma[k - 1]) / math.log(2))
                state.theta_hat = state.theta_hat - corr
            u = self.grid.to_float(state.theta_hat - state.theta_int, self.log_sigma[k] / math.log(2))
        else:
            if k == 1:
                u = y - self.a * state.theta
            else:
                u = math.sqrt(1 + self.power) * (state.u - sp / (1 + self.power) * y)
            state.u = u
        state.k = k
        state.err_var = self.err_var(k)
        return (sp * u)[:, None]

    def estimate(self, fed_back: np.ndarray):
        """Receiver estimate after all ``n`` uses (ints in exact mode)."""
        if self.exact:
            est = self.grid.to_int(fed_back[:, 0], self.log_sigma[1] / math.log(2))
            for j in range(2, self.n + 1):
                est = est - self.grid.to_int(
                    fed_back[:, j - 1], (self._gain_log + self.log_sigma[j - 1]) / math.log(2))
            return est
        return fed_back[:, 0] / self.a - fed_back[:, 1:] @ self._gains[1:]

    def decode(self, fed_back, messages=None):
        if self.m == 1:
            return [np.ones(fed_back.shape[0], dtype=np.int64)]
        est = self.estimate(fed_back)
        if self.exact:
            return [self.grid.decode(est)]
        return [_pam.nearest_message_float(est, self.m)]


def build_sk_code(n: int, m: int, power: float, exact: bool | None = None) -> SchalkwijkKailathCode:
    return SchalkwijkKailathCode(n, m, power, exact=exact)


def sk_variance_by_closed_form(code: SchalkwijkKailathCode) -> np.ndarray:
    """``sigma_1^2 / (1+P)^(k-1)`` for ``k = 1..n``."""
    k = np.arange(1, code.n + 1)
    return code.err_var(1) / (1 + code.power) ** (k - 1)


class ConstantCode(FeedbackCode):
    """Sends fixed levels and decodes message 1.

    ``levels`` holds one value per user, used at every channel use, or an
    ``(n, users)`` table of per-use values.
    """

    def __init__(self, n: int, levels=(0.0,), message_counts=None):
        self.n = int(n)
        lv = np.asarray(levels, dtype=float)
        if lv.ndim == 1:
            lv = np.tile(lv, (self.n, 1))
        if lv.ndim != 2 or lv.shape[0] != self.n or lv.shape[1] not in (1, 2):
            raise ParameterError(f"levels must have shape (users,) or (n, users), got {np.shape(levels)}")
        self.levels = lv
        self.message_counts = tuple(message_counts or (1,) * lv.shape[1])
        self.power_budgets = tuple(float(v) for v in (lv ** 2).mean(axis=0))

    def start(self, messages):
        return len(messages[0])

    def encode(self, state, k, past):
        return np.tile(self.levels[k], (state, 1))

    def decode(self, fed_back, messages=None):
        return [np.ones(fed_back.shape[0], dtype=np.int64) for _ in range(self.levels.shape[1])]


class ThresholdStubCode(FeedbackCode):
    """Test code with a known error probability.

    Sends ``sqrt(power)`` at every use. The decoder is told the sent message
    and answers wrongly exactly when the first noise sample exceeds the
    ``1 - error_prob`` quantile, so the error probability is ``error_prob``.
    """

    genie = True

    def __init__(self, n: int, m: int, power: float, error_prob: float):
        if m < 2 and error_prob > 0:
            raise ParameterError("a wrong decision needs at least two messages")
        self.n, self.m, self.power = int(n), int(m), float(power)
        self.message_counts = (self.m,)
        self.power_budgets = (self.power,)
        self.error_prob = float(error_prob)
        self.threshold = normal_quantile(1 - error_prob) if 0 < error_prob < 1 else math.inf

    def start(self, messages):
        return len(messages[0])

    def encode(self, state, k, past):
        return np.full((state, 1), math.sqrt(self.power))

    def decode(self, fed_back, messages=None):
        w = messages[0]
        wrong = fed_back[:, 0] - math.sqrt(self.power) > self.threshold
        other = message_array([int(v) % self.m + 1 for v in w], self.m)
        return [np.where(wrong, other, w)]


@dataclass(frozen=True)
class SplitMessagePlan:
    """Message split of the power-controlled code.

    ``m_total`` and ``m_bar`` are the nearest integers to the real-valued
    sizes. Messages ``1..m_bar`` form the coded subset, the rest the silent one.
    """

    n: int
    power: float
    eps: float
    eps_n: float
    inner_power: float
    m_total_real: mpmath.mpf
    m_bar_real: mpmath.mpf
    m_total: int
    m_bar: int

    @property
    def ln_m_total(self) -> float:
        return float(mpmath.log(self.m_total_real))

    @property
    def ln_m_bar(self) -> float:
        return float(mpmath.log(self.m_bar_real))

    @property
    def coded_fraction(self) -> float:
        """Real-valued ``m_bar / m_total`` = ``(1-eps)/(1-eps_n)``."""
        return float(self.m_bar_real / self.m_total_real)

    @property
    def power_bound(self) -> float:
        """Expected power bound ``coded_fraction * inner_power``."""
        return self.coded_fraction * self.inner_power

    @property
    def error_bound(self) -> float:
        """``eps_n * m_bar/m_total + (m_total - m_bar)/m_total``."""
        f = self.coded_fraction
        return self.eps_n * f + (1 - f)

    def coded(self, w) -> np.ndarray:
        return np.asarray(w <= self.m_bar, dtype=bool)


def split_message_plan(n: int, power: float, eps: float, eps_n: float | None = None) -> SplitMessagePlan:
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps!r}")
    if int(n) != n or n < 1:
        raise ParameterError(f"blocklength must be a positive integer, got {n!r}")
    if not power > 0:
        raise ParameterError(f"power must be positive, got {power!r}")
    eps_n = 1.0 / n if eps_n is None else float(eps_n)
    if eps_n >= eps:
        raise BlocklengthError(f"inner error target {eps_n} is not below eps={eps}; increase n")
    inner = power / (1 - eps + 1 / n)
    digits = int(n * math.log10(1 + inner) / 2) + 30
    with mpmath.workdps(max(30, digits)):
        mp_inner = mpmath.mpf(power) / (1 - mpmath.mpf(eps) + mpmath.mpf(1) / n)
        m_bar = (1 + mp_inner) ** (mpmath.mpf(n) / 2)
        m_tot = (1 - mpmath.mpf(eps_n)) / (1 - mpmath.mpf(eps)) * m_bar
        m_tot_int = int(mpmath.nint(m_tot))
        m_bar_int = int(mpmath.nint(m_bar))
    return SplitMessagePlan(int(n), float(power), float(eps), eps_n, inner,
                            +m_tot, +m_bar, m_tot_int, m_bar_int)


class PowerControlledCode(FeedbackCode):
    """Inner code on the first ``m_bar`` messages, all-zero inputs for the rest."""

    def __init__(self, plan: SplitMessagePlan, inner: FeedbackCode):
        if inner.n != plan.n or inner.users != 1:
            raise ParameterError("inner code must be single-user with the same blocklength")
        if inner.message_counts[0] != plan.m_bar:
            raise ParameterError("inner code message count must equal the coded subset size")
        self.plan = plan
        self.inner = inner
        self.n = plan.n
        self.message_counts = (plan.m_total,)
        self.power_budgets = (plan.power,)
        self.aux_slots = inner.aux_slots
        self.genie = inner.genie

    def _inner_messages(self, w):
        coded = self.plan.coded(w)
        return coded, message_array(np.where(coded, w, 1), self.plan.m_bar)

    def start(self, messages):
        coded, inner_w = self._inner_messages(messages[0])
        return self.inner.start([inner_w]), coded

    def encode(self, state, k, past):
        x = self.inner.encode(state[0], k, past)
        return np.where(state[1][:, None], x, 0.0)

    def feedback(self, state, k, y, aux):
        return self.inner.feedback(state[0], k, y, aux)

    def decode(self, fed_back, messages=None):
        if self.genie:
            _, inner_w = self._inner_messages(messages[0])
            return self.inner.decode(fed_back, [inner_w])
        return self.inner.decode(fed_back)


def build_power_controlled_code(n: int, P: float, eps: float, L: int = 1,
                                inner: Callable[[int, int, float], FeedbackCode] | None = None,
                                eps_n: float | None = None):
    """Power-controlled code and its message plan.

    ``inner(n, m_bar, inner_power)`` builds the code used on the coded subset;
    it must reach error ``eps_n`` (default ``1/n``), which is asserted rather
    than derived. ``L`` picks the phase schedule attached to the code as
    ``code.schedule`` (``None`` where the schedule is undefined for this ``n``).
    The default inner code is the SK code.
    """
    plan = split_message_plan(n, P, eps, eps_n)
    factory = inner or (lambda nn, m, p: SchalkwijkKailathCode(nn, m, p))
    code = PowerControlledCode(plan, factory(plan.n, plan.m_bar, plan.inner_power))
    inner_err = getattr(code.inner, "analytic_error", None)
    if inner_err is not None and inner_err() > plan.eps_n * (1 + 1e-9):
        warnings.warn(f"inner code error {inner_err():.4g} exceeds the target {plan.eps_n:.4g}; "
                      f"the composite error can exceed eps={eps}")
    try:
        code.schedule = phase_schedule(n, L)
    except DomainError:
        code.schedule = None
    return code, plan


class TruncatedCode(FeedbackCode):
    """Zeroes the input at use ``k`` once the energy of the previous raw inputs exceeds ``budget``.

    The raw inputs ``f_k`` are produced by the wrapped encoder fed with the
    actual channel outputs. The transmitted input is
    ``f_k * [sum_{i<k} f_i^2 <= budget]``, per user. Raw inputs and the
    admission indicator are recorded as extras ``raw`` and ``admitted``.
    """

    def __init__(self, inner: FeedbackCode, budget: float):
        if not budget >= 0:
            raise ParameterError(f"budget must be nonnegative, got {budget!r}")
        self.inner = inner
        self.budget = float(budget)
        self.n = inner.n
        self.message_counts = inner.message_counts
        self.power_budgets = inner.power_budgets
        self.aux_slots = inner.aux_slots
        self.genie = inner.genie

    def start(self, messages):
        b = len(messages[0])
        return {
            "inner": self.inner.start(messages),
            "spent": np.zeros((b, self.users)),
            "raw": np.empty((b, self.n, self.users)),
            "admitted": np.empty((b, self.n, self.users), dtype=bool),
        }

    def encode(self, state, k, past):
        f = np.asarray(self.inner.encode(state["inner"], k, past), dtype=float)
        ok = state["spent"] <= self.budget
        state["raw"][:, k, :] = f
        state["admitted"][:, k, :] = ok
        state["spent"] = state["spent"] + f * f
        return np.where(ok, f, 0.0)

    def feedback(self, state, k, y, aux):
        return self.inner.feedback(state["inner"], k, y, aux)

    def decode(self, fed_back, messages=None):
        return self.inner.decode(fed_back, messages) if self.genie else self.inner.decode(fed_back)

    def extras(self, state):
        return {"raw": state["raw"], "admitted": state["admitted"]}


def truncate_to_peak_power(code: FeedbackCode, budget: float) -> TruncatedCode:
    return TruncatedCode(code, budget)


def prefix_law_violations(x: np.ndarray, raw: np.ndarray, budget: float) -> int:
    """Count uses where ``x`` differs from ``raw * [prefix energy <= budget]``.

    Arrays are ``(trials, n, users)``; the prefix energy at ``k`` sums the raw
    inputs of uses before ``k``.
    """
    prefix = np.cumsum(raw * raw, axis=1) - raw * raw
    expected = np.where(prefix <= budget, raw, 0.0)
    return int(np.sum(x != expected))


@dataclass(frozen=True)
class PhaseSchedule:
    """Rate backoffs of the multi-phase inner scheme for depth ``L``.

    ``d[k]`` and ``d_tilde[k]`` for ``k = 0..L``; ``n1 = n - L + 1`` so that
    ``n - n1 + 1 = L``.
    """

    n: int
    L: int
    delta_n: float
    n1: int
    d: tuple
    d_tilde: tuple
    gap: float

    @property
    def phases(self) -> int:
        return self.n - self.n1 + 1

    def chain(self) -> list[float]:
        """Values in the order they are claimed to increase, ending with ``gap``."""
        m = self.phases
        seq = [self.d_tilde[m]]
        for k in range(m - 1, -1, -1):
            seq += [self.d[k], self.d_tilde[k]]
        return seq + [self.gap]

    def ordering_holds(self) -> bool:
        seq = self.chain()
        return seq[0] > 0 and all(a < b for a, b in zip(seq, seq[1:]))

    def error_bound(self) -> float:
        """``exp(-exp_L(2 n d[L-1]))``; equals ``1/n`` by construction."""
        return math.exp(-nested_exp(self.L, 2 * self.n * self.d[self.L - 1]))


def phase_schedule(n: int, L: int) -> PhaseSchedule:
    """Schedule for blocklength ``n`` and depth ``L``; raises DomainError where undefined."""
    if int(L) != L or L < 1:
        raise ParameterError(f"L must be a positive integer, got {L!r}")
    if int(n) != n or n <= L:
        raise ParameterError(f"blocklength must exceed L, got n={n!r}")
    n, L = int(n), int(L)
    n1 = math.floor((1 - Fraction(L, n)) * n) + 1
    m = n - n1 + 1
    d = tuple(nested_log_pow(L + 1, n, 3.0 ** (L - k - 1)) / (2 * n) for k in range(m + 1))
    dt = tuple(nested_log_pow(L + 1, n, 3.0 ** (L - k) / 2) / (2 * n) for k in range(m + 1))
    gap = 2 ** L * nested_log(L + 1, n) / (2 * n)
    return PhaseSchedule(n, L, L / n, n1, d, dt, gap)
