"""Unit-variance AWGN channel with noiseless output feedback.

Trials are simulated in vectorized batches. Every random quantity of trial ``t``
is a pure function of ``(seed, t, slot)`` so results do not depend on batch
boundaries, execution order or the number of worker threads.

Random numbers come from a counter-based SplitMix64 construction. A per-trial
key is derived from the master seed, the stream id and the trial index, and
slot ``s`` of that trial is ``mix(key + (s+1)*GOLDEN)``. Gaussian noise uses the
Box-Muller transform on consecutive slot pairs, so a noise prefix of length
``k`` is the same for every blocklength ``n >= k``.
"""
from __future__ import annotations

import csv
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArityError, MessageRangeError, ParameterError

CHUNK = 4096
_Z95 = 1.959963984540054
_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_TRIAL_MULT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

STREAM_MESSAGE = 1
STREAM_NOISE = 2
STREAM_AUX = 3
# words reserved per user in the message stream
_MESSAGE_WORDS = 32


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _scalar_mix(v: int) -> int:
    with np.errstate(over="ignore"):
        return int(_mix(np.array([v & _MASK64], dtype=np.uint64))[0])


def stream_words(seed: int, stream: int, trials, count: int) -> np.ndarray:
    """Raw 64-bit words, shape ``(len(trials), count)``, for slots ``0..count-1``."""
    trials = np.asarray(trials, dtype=np.uint64)
    base = _scalar_mix(_scalar_mix(int(seed) & _MASK64) ^ _scalar_mix(stream * 0x9E3779B97F4A7C15))
    with np.errstate(over="ignore"):
        keys = _mix(np.uint64(base) + trials * _TRIAL_MULT)
        slots = (np.arange(count, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        return _mix(keys[:, None] + slots[None, :])


def stream_uniforms(seed, stream, trials, count, offset: int = 0) -> np.ndarray:
    """Uniforms in the open interval (0, 1) with 53-bit resolution."""
    words = stream_words(seed, stream, trials, count + offset)[:, offset:]
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def stream_normals(seed, stream, trials, count: int) -> np.ndarray:
    """Standard normals via Box-Muller, shape ``(len(trials), count)``."""
    pairs = (count + 1) // 2
    u = stream_uniforms(seed, stream, trials, 2 * pairs)
    r = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    ang = 2.0 * math.pi * u[:, 1::2]
    out = np.empty((u.shape[0], 2 * pairs))
    out[:, 0::2] = r * np.cos(ang)
    out[:, 1::2] = r * np.sin(ang)
    return out[:, :count]


def _uniform_messages(seed, trials, user: int, m: int) -> np.ndarray:
    """Uniform draws from ``1..m``; exact up to a bias below ``2**-64``."""
    if m <= 1 << 32:
        u = stream_uniforms(seed, STREAM_MESSAGE, trials, 1, offset=user * _MESSAGE_WORDS)[:, 0]
        return np.minimum(np.floor(u * m).astype(np.int64), m - 1) + 1
    words_needed = (m.bit_length() + 64 + 63) // 64
    if words_needed > _MESSAGE_WORDS:
        raise ParameterError("message set too large to sample")
    words = stream_words(seed, STREAM_MESSAGE, trials, (user + 1) * _MESSAGE_WORDS)
    words = words[:, user * _MESSAGE_WORDS: user * _MESSAGE_WORDS + words_needed]
    out = np.empty(len(trials), dtype=object)
    for i, row in enumerate(words.tolist()):
        v = 0
        for w in row:
            v = (v << 64) | w
        out[i] = v % m + 1
    return out


def message_array(values, m: int) -> np.ndarray:
    """Message indices as int64 when ``m`` fits, else Python-int object array."""
    if m < 1 << 62:
        return np.asarray(values, dtype=np.int64)
    arr = np.empty(len(values), dtype=object)
    arr[:] = [int(v) for v in values]
    return arr


@dataclass(frozen=True)
class ChannelSpec:
    n: int
    users: int = 1
    noise_variance: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"blocklength must be a positive integer, got {self.n!r}")
        if self.users not in (1, 2):
            raise ArityError(f"only 1 or 2 users are supported, got {self.users!r}")
        if self.noise_variance != 1.0:
            raise ParameterError("noise variance is fixed to 1")


class FeedbackCode(ABC):
    """An encoder/decoder pair used over ``n`` channel uses.

    Subclasses implement :meth:`start`, :meth:`encode` and :meth:`decode`.
    ``encode`` receives only the fed-back values of the previous uses, and
    ``decode`` receives only the fed-back values of all ``n`` uses. The state
    returned by ``start`` is created fresh for each batch of trials, so codes
    themselves hold no per-trial data.

    ``aux_slots`` is the number of receiver-side random variables per trial
    that :meth:`feedback` may use (for example receiver-added noise).
    """

    n: int
    message_counts: tuple
    power_budgets: tuple
    aux_slots: int = 0
    # genie decoders are told the sent messages; only used by test stubs
    genie: bool = False

    @property
    def users(self) -> int:
        return len(self.message_counts)

    @property
    def spec(self) -> ChannelSpec:
        return ChannelSpec(self.n, self.users)

    @abstractmethod
    def start(self, messages: Sequence[np.ndarray]):
        """Return the encoder state for a batch with the given per-user messages."""

    @abstractmethod
    def encode(self, state, k: int, past: np.ndarray) -> np.ndarray:
        """Inputs at use ``k`` (0-based), shape ``(batch, users)``.

        ``past`` holds the fed-back values of uses ``0..k-1``.
        """

    def feedback(self, state, k: int, y: np.ndarray, aux: np.ndarray) -> np.ndarray:
        """Value fed back to the transmitters after use ``k``. Default: the output."""
        return y

    @abstractmethod
    def decode(self, fed_back: np.ndarray, messages=None) -> list:
        """Decoded messages per user (list of arrays)."""

    def extras(self, state) -> dict:
        """Optional per-trial arrays recorded alongside transcripts."""
        return {}


@dataclass
class Batch:
    """Vectorized transcripts of consecutive trials."""

    trials: np.ndarray
    messages: list
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    fed_back: np.ndarray
    decoded: list
    extras: dict = field(default_factory=dict)

    @property
    def energy(self) -> np.ndarray:
        return np.sum(self.x ** 2, axis=1)

    @property
    def errors(self) -> np.ndarray:
        wrong = np.zeros(len(self.trials), dtype=bool)
        for sent, got in zip(self.messages, self.decoded):
            wrong |= np.asarray(sent != got, dtype=bool)
        return wrong

    def transcript(self, i: int) -> "Transcript":
        return Transcript(
            trial=int(self.trials[i]),
            messages=tuple(m[i] for m in self.messages),
            x=self.x[i].copy(),
            z=self.z[i].copy(),
            y=self.y[i].copy(),
            fed_back=self.fed_back[i].copy(),
            decoded=tuple(d[i] for d in self.decoded),
            extras={key: np.asarray(v)[i] for key, v in self.extras.items()},
        )


@dataclass
class Transcript:
    """One trial: inputs ``x`` (n, users), noise, outputs, fed-back values, decisions."""

    trial: int
    messages: tuple
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    fed_back: np.ndarray
    decoded: tuple
    extras: dict = field(default_factory=dict)

    @property
    def energy(self) -> np.ndarray:
        return np.sum(self.x ** 2, axis=0)

    @property
    def error(self) -> bool:
        return any(a != b for a, b in zip(self.messages, self.decoded))


def channel_law_residual(t: Transcript) -> float:
    """``max_k |y_k - sum_j x_jk - z_k|``, recomputed in the simulator's order."""
    s = t.x[:, 0].copy()
    for j in range(1, t.x.shape[1]):
        s = s + t.x[:, j]
    return float(np.max(np.abs(t.y - (s + t.z)))) if len(t.y) else 0.0


def _check_messages(code: FeedbackCode, messages) -> list:
    out = []
    for j, (m, cnt) in enumerate(zip(messages, code.message_counts)):
        arr = message_array(np.atleast_1d(np.asarray(m, dtype=object)), cnt)
        if np.any(arr < 1) or np.any(arr > cnt):
            raise MessageRangeError(f"user {j + 1} message outside 1..{cnt}")
        out.append(arr)
    return out


def simulate_batch(code: FeedbackCode, seed: int, trials, messages=None, noise=None) -> Batch:
    """Run ``code`` on the given trial indices.

    ``messages`` may be ``None`` (uniform draws from the message stream) or a
    tuple of per-user values broadcast to the batch. ``noise`` overrides the
    noise stream, for causality probes.
    """
    trials = np.asarray(trials, dtype=np.int64)
    b, n, users = len(trials), code.n, code.users
    if messages is None:
        msgs = [_uniform_messages(seed, trials, j, int(m)) for j, m in enumerate(code.message_counts)]
    else:
        if len(messages) != users:
            raise ArityError(f"expected {users} messages, got {len(messages)}")
        msgs = []
        for m in _check_messages(code, messages):
            msgs.append(np.repeat(m, b) if len(m) == 1 else m)
    if noise is None:
        z = stream_normals(seed, STREAM_NOISE, trials, n)
    else:
        z = np.array(noise, dtype=float).reshape(b, n)
    aux = stream_normals(seed, STREAM_AUX, trials, code.aux_slots) if code.aux_slots else np.empty((b, 0))
    x = np.empty((b, n, users))
    y = np.empty((b, n))
    fb = np.empty((b, n))
    state = code.start(msgs)
    for k in range(n):
        xk = np.asarray(code.encode(state, k, fb[:, :k]), dtype=float).reshape(b, users)
        x[:, k, :] = xk
        s = xk[:, 0]
        for j in range(1, users):
            s = s + xk[:, j]
        y[:, k] = s + z[:, k]
        fb[:, k] = code.feedback(state, k, y[:, k], aux)
    decoded = code.decode(fb, msgs) if code.genie else code.decode(fb)
    return Batch(trials, msgs, x, z, y, fb, list(decoded), dict(code.extras(state)))


def run_trial(code: FeedbackCode, messages: tuple, seed: int, trial_index: int) -> Transcript:
    """Single transcript for fixed messages; identical inputs give identical output."""
    return simulate_batch(code, seed, [trial_index], messages=messages).transcript(0)


def _chunks(trials: int, start: int = 0, chunk: int = CHUNK):
    for lo in range(start, start + trials, chunk):
        yield np.arange(lo, min(lo + chunk, start + trials), dtype=np.int64)


def collect(code, trials: int, seed: int, reducer: Callable[[Batch], dict],
            messages=None, executor=None, chunk: int = CHUNK) -> dict:
    """Sum ``reducer(batch)`` over all trials, chunk by chunk, in trial order.

    ``executor`` is any object with a ``map`` method (a thread pool); chunks are
    fixed by ``chunk`` so the result does not depend on the executor.
    """
    if int(trials) != trials or trials < 1:
        raise ParameterError(f"trials must be a positive integer, got {trials!r}")

    def job(idx):
        return reducer(simulate_batch(code, seed, idx, messages=messages))

    parts = list(executor.map(job, _chunks(trials, chunk=chunk))) if executor else [job(i) for i in _chunks(trials, chunk=chunk)]
    total = {}
    for part in parts:
        for key, val in part.items():
            total[key] = total[key] + val if key in total else val
    return total


def wilson_halfwidth(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    hw = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return center, hw


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo probability estimate with a 95% Wilson interval."""

    p_hat: float
    trials: int
    ci_halfwidth: float
    seed: int
    successes: int = 0

    @classmethod
    def from_counts(cls, successes: int, trials: int, seed: int) -> "McEstimate":
        _, hw = wilson_halfwidth(successes, trials)
        return cls(successes / trials, trials, hw, seed, int(successes))

    @property
    def se(self) -> float:
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.trials)

    @property
    def ci(self) -> tuple[float, float]:
        center, hw = wilson_halfwidth(self.successes, self.trials)
        return max(0.0, center - hw), min(1.0, center + hw)

    def se_at(self, p: float) -> float:
        """Standard error of a proportion at reference value ``p``."""
        return math.sqrt(p * (1 - p) / self.trials)


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    se: float
    trials: int
    seed: int

    @property
    def ci_halfwidth(self) -> float:
        return _Z95 * self.se


def _mean_estimate(s1, s2, trials, seed) -> MeanEstimate:
    mean = s1 / trials
    var = max(s2 / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
    return MeanEstimate(float(mean), math.sqrt(var / trials), trials, seed)


def estimate_error(code: FeedbackCode, trials: int, seed: int, message_sampler="uniform",
                   messages=None, executor=None) -> McEstimate:
    """Fraction of trials in which any user's decision differs from its message."""
    if message_sampler not in ("uniform", "fixed"):
        raise ParameterError(f"unknown message sampler {message_sampler!r}")
    if message_sampler == "fixed" and messages is None:
        raise ParameterError("fixed sampler needs messages")
    msgs = messages if message_sampler == "fixed" else None
    tot = collect(code, trials, seed, lambda b: {"err": int(np.sum(b.errors))}, msgs, executor)
    return McEstimate.from_counts(tot["err"], trials, seed)


def estimate_power(code: FeedbackCode, trials: int, seed: int, executor=None) -> list[MeanEstimate]:
    """Per-user mean of ``(1/n) sum_k x_k^2`` with standard errors."""

    def red(b):
        e = b.energy / code.n
        return {"s1": e.sum(axis=0), "s2": (e * e).sum(axis=0)}

    tot = collect(code, trials, seed, red, None, executor)
    return [_mean_estimate(tot["s1"][j], tot["s2"][j], trials, seed) for j in range(code.users)]


def second_moment_sums(x1: np.ndarray, x2: np.ndarray) -> dict:
    """Per-use sums needed for second moments and correlation standard errors."""
    a, b = x1 * x1, x2 * x2
    c = x1 * x2
    return {
        "count": x1.shape[0],
        "s11": a.sum(0), "s22": b.sum(0), "s12": c.sum(0),
        "q11": (a * a).sum(0), "q22": (b * b).sum(0), "q12": (c * c).sum(0),
        "c1112": (a * c).sum(0), "c2212": (b * c).sum(0), "c1122": (a * b).sum(0),
    }


def stats_from_sums(tot: dict):
    """Turn :func:`second_moment_sums` totals into :class:`PerSymbolStats`."""
    from .mac_bounds import PerSymbolStats

    n_tr = tot["count"]
    if n_tr < 2:
        raise ParameterError("need at least two trials for per-symbol statistics")
    m11, m22, m12 = tot["s11"] / n_tr, tot["s22"] / n_tr, tot["s12"] / n_tr
    v11 = np.maximum(tot["q11"] / n_tr - m11 ** 2, 0)
    v22 = np.maximum(tot["q22"] / n_tr - m22 ** 2, 0)
    v12 = np.maximum(tot["q12"] / n_tr - m12 ** 2, 0)
    c_11_12 = tot["c1112"] / n_tr - m11 * m12
    c_22_12 = tot["c2212"] / n_tr - m22 * m12
    c_11_22 = tot["c1122"] / n_tr - m11 * m22
    degenerate = (m11 < 1e-12) | (m22 < 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(m11 * m22)
        rho = np.where(degenerate, np.nan, m12 / root)
        g12 = 1 / root
        g11 = -rho / (2 * m11)
        g22 = -rho / (2 * m22)
        var = (g12 ** 2 * v12 + g11 ** 2 * v11 + g22 ** 2 * v22
               + 2 * g12 * g11 * c_11_12 + 2 * g12 * g22 * c_22_12 + 2 * g11 * g22 * c_11_22)
        rho_se = np.where(degenerate, np.nan, np.sqrt(np.maximum(var, 0) / n_tr))
    return PerSymbolStats(
        p1=m11, p2=m22, rho=rho, degenerate=degenerate,
        p1_se=np.sqrt(v11 / n_tr), p2_se=np.sqrt(v22 / n_tr), rho_se=rho_se, trials=int(n_tr),
    )


def per_symbol_stats(code: FeedbackCode, trials: int, seed: int, executor=None,
                     select: Callable[[Batch], np.ndarray] | None = None,
                     source: str = "inputs"):
    """Empirical per-use powers and correlation of a two-user code.

    ``select`` optionally restricts to trials where it returns True.
    ``source`` picks the per-user sequences: ``"inputs"`` uses the channel
    inputs; any other value is looked up in the code's recorded extras as
    ``source + "1"`` and ``source + "2"``.
    """
    if code.users != 2:
        raise ArityError("per-symbol statistics need a two-user code")

    def red(b):
        keep = np.ones(len(b.trials), dtype=bool) if select is None else np.asarray(select(b), dtype=bool)
        if source == "inputs":
            x1, x2 = b.x[keep, :, 0], b.x[keep, :, 1]
        else:
            x1 = np.asarray(b.extras[source + "1"])[keep]
            x2 = np.asarray(b.extras[source + "2"])[keep]
        return second_moment_sums(x1, x2)

    tot = collect(code, trials, seed, red, None, executor)
    stats = stats_from_sums(tot)
    if np.any(stats.degenerate):
        warnings.warn(f"{int(np.sum(stats.degenerate))} uses have zero empirical power; correlation undefined there")
    return stats


def dump_transcripts_csv(path, batches: Iterable[Batch]) -> int:
    """Write one row per channel use: trial, k, x1, x2, z, y. Returns rows written."""
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "k", "x1", "x2", "z", "y"])
        for b in batches:
            users = b.x.shape[2]
            for i, t in enumerate(b.trials):
                for k in range(b.x.shape[1]):
                    x2 = repr(float(b.x[i, k, 1])) if users > 1 else ""
                    w.writerow([int(t), k + 1, repr(float(b.x[i, k, 0])), x2,
                                repr(float(b.z[i, k])), repr(float(b.y[i, k]))])
                    rows += 1
    return rows


class RelabeledCode(FeedbackCode):
    """Applies a seeded affine relabeling ``w -> a(w-1)+b mod M`` per user.

    A message-symmetric error profile results when the relabeling is drawn at
    random, which turns average-error guarantees into maximal-error ones.
    """

    def __init__(self, inner: FeedbackCode, seed: int):
        self.inner = inner
        self.n = inner.n
        self.message_counts = inner.message_counts
        self.power_budgets = inner.power_budgets
        self.aux_slots = inner.aux_slots
        self.genie = inner.genie
        self._maps = []
        for j, m in enumerate(self.message_counts):
            m = int(m)
            a = (_scalar_mix(seed + 2 * j) % m) | 1 if m > 1 else 1
            while math.gcd(a, m) != 1:
                a += 2
            b = _scalar_mix(seed + 2 * j + 1) % m
            self._maps.append((a, b, pow(a, -1, m) if m > 1 else 1, m))

    def _fwd(self, msgs):
        return [message_array([(a * (int(w) - 1) + b) % m + 1 for w in arr], m)
                for arr, (a, b, _, m) in zip(msgs, self._maps)]

    def _inv(self, msgs):
        return [message_array([(ai * (int(w) - 1 - b)) % m + 1 for w in arr], m)
                for arr, (_, b, ai, m) in zip(msgs, self._maps)]

    def start(self, messages):
        mapped = self._fwd(messages)
        return (self.inner.start(mapped), mapped)

    def encode(self, state, k, past):
        return self.inner.encode(state[0], k, past)

    def feedback(self, state, k, y, aux):
        return self.inner.feedback(state[0], k, y, aux)

    def decode(self, fed_back, messages=None):
        if self.genie:
            got = self.inner.decode(fed_back, self._fwd(messages))
        else:
            got = self.inner.decode(fed_back)
        return self._inv(got)

    def extras(self, state):
        return self.inner.extras(state[0])
