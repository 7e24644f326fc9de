"""Uniform PAM message grid and an exact fixed-point receiver estimate.

Message ``w`` in ``1..M`` sits at ``theta(w) = (w - (M+1)/2)/M``. For high-rate
codes the grid spacing ``1/M`` is far below double precision, so the receiver
estimate is kept as a Python integer in units of ``1/(2M 2^G)``. The guard
``G`` is chosen so that the smallest standard deviation the code reaches is
still about ``2^40`` units.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError

_GUARD_BITS = 40
_MAX_BITS = 1 << 20


def theta_points(w, m: int) -> np.ndarray:
    """Grid points as floats (exact for ``m < 2**52``)."""
    w = np.asarray([float(2 * int(v) - m - 1) for v in w]) if np.asarray(w).dtype == object \
        else 2.0 * np.asarray(w, dtype=float) - m - 1
    return w / (2.0 * m)


def theta_variance(m: int) -> float:
    """Variance of a uniformly chosen grid point."""
    return (m * m - 1) / (12.0 * m * m)


def nearest_message_float(theta_hat: np.ndarray, m: int) -> np.ndarray:
    w = np.floor(theta_hat * m + (m + 1) / 2.0 + 0.5)
    return np.clip(w, 1, m).astype(np.int64)


class FixedPointGrid:
    """Exact integer arithmetic for the receiver estimate of one user."""

    def __init__(self, m: int, log2_sigma_min: float):
        self.m = int(m)
        self.log2_unit0 = math.log2(2 * self.m)
        self.guard = max(0, math.ceil(_GUARD_BITS - (self.log2_unit0 + log2_sigma_min)))
        if self.guard + self.m.bit_length() > _MAX_BITS:
            raise ParameterError("message grid needs more precision than supported")
        # value * 2^log2_unit is the integer representation
        self.log2_unit = self.log2_unit0 + self.guard

    def theta_int(self, w) -> np.ndarray:
        out = np.empty(len(w), dtype=object)
        out[:] = [(2 * int(v) - self.m - 1) << self.guard for v in w]
        return out

    def to_int(self, values: np.ndarray, log2_factor: float) -> np.ndarray:
        """``round(values * 2^(log2_factor + log2_unit))`` as Python ints."""
        total = log2_factor + self.log2_unit
        e = math.floor(total) - 60
        mant = np.rint(np.asarray(values, dtype=float) * 2.0 ** (total - e)).tolist()
        out = np.empty(len(mant), dtype=object)
        if e >= 0:
            out[:] = [int(v) << e for v in mant]
        else:
            out[:] = [int(v) >> -e for v in mant]
        return out

    def to_float(self, ints: np.ndarray, log2_scale: float) -> np.ndarray:
        """``ints / 2^(log2_scale + log2_unit)`` as floats."""
        total = log2_scale + self.log2_unit
        e = math.floor(total)
        frac = 2.0 ** (total - e)
        res = []
        for d in ints:
            s = max(0, d.bit_length() - 60)
            res.append(math.ldexp(float(d >> s), s - e))
        return np.asarray(res) / frac

    def decode(self, theta_hat_int: np.ndarray) -> np.ndarray:
        off = (self.m + 2) << self.guard
        sh = self.guard + 1
        vals = [min(max((int(t) + off) >> sh, 1), self.m) for t in theta_hat_int]
        if self.m < 1 << 62:
            return np.asarray(vals, dtype=np.int64)
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
        return out
