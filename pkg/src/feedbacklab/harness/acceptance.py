"""Acceptance suite: ten numbered checks at their stated tolerances."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import mpmath
import numpy as np

from .. import channel, mac_bounds, mac_codes, su_bounds, su_codes
from ..numerics import (berry_esseen_stats, gaussian_capacity, gaussian_dispersion, normal_cdf,
                        quartic_residual_ok)
from .config import scenario_seed, worker_pool

Z_TOL = 3.0


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [k for k, v in self.checks.items() if not v]
        tail = f" failed: {', '.join(failed)}" if failed else ""
        return f"criterion {self.number:2d} {status} {self.title} ({self.seconds:.1f}s){tail}"


def _result(number, title, checks, details):
    return CriterionResult(number, title, all(checks.values()), checks, details)


# 1

def capacity_goldens(seed, pool):
    vals = {"C(1)": (gaussian_capacity(1.0), 0.346574), "C(3)": (gaussian_capacity(3.0), 0.693147),
            "V(1)": (gaussian_dispersion(1.0), 0.375)}
    checks = {k: abs(v - g) <= 1e-6 for k, (v, g) in vals.items()}
    return _result(1, "capacity and dispersion goldens", checks, {k: v for k, (v, _) in vals.items()})


# 2

def sk_fidelity(seed, pool, trials=100_000, ns=range(10, 26), ms=(2, 4, 8), power=1.0):
    rows, worst_z, worst_rel = [], 0.0, 0.0
    ok_err, ok_var, ok_bound = True, True, True
    for n, m in product(ns, ms):
        code = su_codes.build_sk_code(n, m, power)
        est = channel.estimate_error(code, trials, scenario_seed(seed, f"sk-{n}-{m}"), executor=pool)
        ana = code.analytic_error()
        se = est.se_at(ana)
        diff = abs(est.p_hat - ana)
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        worst_z = max(worst_z, z)
        ok_err &= diff <= Z_TOL * se + 1e-15
        ok_bound &= est.p_hat <= code.error_bound() + Z_TOL * est.se_at(code.error_bound()) + 1e-15
        rec = np.array([code.err_var(k) for k in range(1, n + 1)])
        rel = float(np.max(np.abs(rec / su_codes.sk_variance_by_closed_form(code) - 1)))
        worst_rel = max(worst_rel, rel)
        ok_var &= rel <= 1e-9
        rows.append({"n": n, "M": m, "p_hat": est.p_hat, "analytic": ana, "z": z})
    return _result(2, "SK error matches the analytic value",
                   {"error_within_3se": ok_err, "error_below_bound": ok_bound, "variance_recursion": ok_var},
                   {"worst_z": worst_z, "worst_variance_rel": worst_rel, "rows": rows})


# 3

def _split_oracle(n, P, eps, eps_n):
    with mpmath.workdps(80):
        pp = mpmath.mpf(P) / (1 - mpmath.mpf(eps) + mpmath.mpf(1) / n)
        m_bar = (1 + pp) ** (mpmath.mpf(n) / 2)
        m_tot = (1 - mpmath.mpf(eps_n)) / (1 - mpmath.mpf(eps)) * m_bar
        return m_tot, m_bar, int(mpmath.nint(m_tot)), int(mpmath.nint(m_bar))


def power_control(seed, pool, n=100, P=1.0, eps=0.2, stub_error=0.01, trials=100_000):
    inner = lambda nn, m, p: su_codes.ThresholdStubCode(nn, m, p, stub_error)
    code, plan = su_codes.build_power_controlled_code(n, P, eps, inner=inner, eps_n=stub_error)
    s = scenario_seed(seed, "power-control")
    err = channel.estimate_error(code, trials, s, executor=pool)
    pw = channel.estimate_power(code, trials, s, executor=pool)[0]
    m_tot, m_bar, m_tot_int, m_bar_int = _split_oracle(n, P, eps, stub_error)
    rel_tot = float(abs(plan.m_total_real / m_tot - 1))
    rel_bar = float(abs(plan.m_bar_real / m_bar - 1))
    checks = {
        "error_at_most_eps": err.p_hat <= eps + Z_TOL * err.se_at(eps),
        "error_at_least_0.18": err.p_hat >= 0.18,
        "power_within_budget": pw.mean <= P + Z_TOL * pw.se,
        "m_total_formula": rel_tot <= 1e-9 and plan.m_total == m_tot_int,
        "m_bar_formula": rel_bar <= 1e-9 and plan.m_bar == m_bar_int,
    }
    return _result(3, "power-control wrapper", checks,
                   {"error": err.p_hat, "power": pw.mean, "error_bound": plan.error_bound,
                    "power_bound": plan.power_bound, "m_total": plan.m_total, "m_bar": plan.m_bar})


# 4

def truncation(seed, pool, n=3000, m=16, P=1.0, eps=0.1, trials=100_000):
    ing = su_bounds.converse_ingredients(n, P, eps)
    markov = 1 - eps - ing.gamma / math.sqrt(n)
    budget = n * ing.q
    code = su_codes.truncate_to_peak_power(su_codes.build_sk_code(n, m, P), budget)

    def red(b):
        raw = b.extras["raw"]
        return {"violations": su_codes.prefix_law_violations(b.x, raw, budget),
                "exceed": int(np.sum((raw * raw).sum(axis=(1, 2)) > budget))}

    s = scenario_seed(seed, "truncation")
    tot = channel.collect(code, trials, s, red, executor=pool)
    exceed = channel.McEstimate.from_counts(tot["exceed"], trials, s)
    checks = {"prefix_law_every_transcript": tot["violations"] == 0,
              "markov_bound_positive": markov > 0,
              "exceed_below_markov": exceed.p_hat <= markov + Z_TOL * exceed.se_at(min(max(markov, 0), 1))}
    return _result(4, "peak-power truncation", checks,
                   {"n": n, "budget": budget, "markov_bound": markov, "exceed": exceed.p_hat,
                    "violations": tot["violations"]})


# 5

def su_sandwich(seed, pool, ns=(10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7, 10 ** 8)):
    checks, details = {}, {}
    for P, eps in product((1.0, 10.0), (0.1, 0.5)):
        key = f"P={P:g},eps={eps:g}"
        n0 = su_bounds.sandwich_crossover(ns, P, eps)
        cap = su_bounds.epsilon_capacity(P, eps)
        big = ns[-1]
        lo = su_bounds.achievable_log_m(big, P, eps) / big
        up = su_bounds.converse_log_m(big, P, eps) / big
        checks[key + " ordered"] = n0 is not None
        checks[key + " near capacity"] = abs(lo / cap - 1) <= 0.01 and abs(up / cap - 1) <= 0.01
        details[key] = {"crossover": n0, "lower_rel_gap": lo / cap - 1, "upper_rel_gap": up / cap - 1}
    return _result(5, "single-user bound sandwich", checks, details)


# 6

def berry_esseen_empirical(seed, pool, q=1.0, n=200, draws=100_000, points=21, chunk=10_000):
    st = berry_esseen_stats(q)
    rng = np.random.default_rng(scenario_seed(seed, "berry-esseen"))
    sums = []
    for lo in range(0, draws, chunk):
        z = rng.standard_normal((min(chunk, draws - lo), n))
        terms = (-q * z * z + 2 * math.sqrt(q) * z + q) / (2 * (1 + q))
        sums.append(terms.sum(axis=1))
    s = np.concatenate(sums) / (st.sigma * math.sqrt(n))
    grid = np.linspace(-3, 3, points)
    emp = np.array([np.mean(s <= u) for u in grid])
    phi = normal_cdf(grid)
    se = np.sqrt(phi * (1 - phi) / draws)
    bound = st.t_bound / (st.sigma ** 3 * math.sqrt(n))
    gaps = np.abs(emp - phi)
    return _result(6, "Berry-Esseen gap", {"gap_within_bound": bool(np.all(gaps <= bound + Z_TOL * se))},
                   {"max_gap": float(gaps.max()), "bound": bound})


# 7

def _identity_gap(r, a, b):
    s = 1 - r * r
    return (1 + a * s) * (1 + b * s) - (1 + a + b + 2 * r * math.sqrt(a * b))


def _largest_root_by_bisection(a, b, scan=4000):
    xs = np.linspace(1 - 1e-9, 1e-9, scan)
    prev = _identity_gap(xs[0], a, b)
    for hi, lo in zip(xs, xs[1:]):
        cur = _identity_gap(lo, a, b)
        if prev == 0:
            return hi
        if (cur < 0) != (prev < 0):
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if (_identity_gap(mid, a, b) < 0) == (cur < 0):
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15:
                    break
            return 0.5 * (lo + hi)
        prev = cur
    return math.nan


def quartic_rho(seed, pool):
    powers = np.logspace(-1, 1.3, 10)
    epss = np.linspace(0.0, 0.9, 10)
    worst_res_ok, worst_diff = True, 0.0
    for P1, P2, eps in product(powers, powers, epss):
        r = mac_codes.solve_rho_star(P1, P2, eps)
        worst_res_ok &= quartic_residual_ok(mac_codes.rho_quartic(P1, P2, eps), r, 1e-9)
        a, b = mac_codes.effective_powers(P1, P2, eps)
        worst_diff = max(worst_diff, abs(r - _largest_root_by_bisection(a, b)))
    ns = [10 ** k for k in range(2, 7)]
    drift = {}
    stable = True
    for P1, P2, eps in ((1.0, 1.0, 0.0), (1.0, 1.0, 0.1), (2.0, 0.5, 0.3), (10.0, 10.0, 0.5)):
        r = mac_codes.solve_rho_star(P1, P2, eps)
        cs = [n * abs(mac_codes.solve_rho_star(P1, P2, eps, n) - r) for n in ns]
        drift[f"{P1:g},{P2:g},{eps:g}"] = cs
        stable &= max(cs) / min(cs) <= 1.5
    return _result(7, "quartic correlation root",
                   {"residual": worst_res_ok, "bisection_agreement": worst_diff <= 1e-9, "drift_constant_stable": stable},
                   {"max_bisection_diff": worst_diff, "drift_constants": drift})


# 8

def _ozarow_sums(code, trials, seed, pool):
    def red(b):
        act = np.asarray(b.extras["active"], dtype=bool)
        e = b.energy / code.n
        return {
            "aborts": int(np.sum(~act)), "errors": int(np.sum(b.errors)),
            "s1": e.sum(axis=0), "s2": (e * e).sum(axis=0),
            "inputs": channel.second_moment_sums(b.x[act, :, 0], b.x[act, :, 1]),
            "err": channel.second_moment_sums(b.extras["err1"][act], b.extras["err2"][act]),
        }

    def job(idx):
        return red(channel.simulate_batch(code, seed, idx))

    parts = list((pool.map if pool else map)(job, channel._chunks(trials)))
    total = {}
    for part in parts:
        for k, v in part.items():
            if isinstance(v, dict):
                d = total.setdefault(k, {})
                for kk, vv in v.items():
                    d[kk] = d[kk] + vv if kk in d else vv
            else:
                total[k] = total[k] + v if k in total else v
    return total


def _pooled_alternation(stats, ks, target):
    """Mean of ``(-1)^k rho_k`` over non-degenerate ``ks`` and a conservative standard error."""
    ks = [k for k in ks if not stats.degenerate[k]]
    signed = np.array([(-1) ** k * stats.rho[k] for k in ks])
    se = float(np.mean([stats.rho_se[k] for k in ks]))
    mean = float(signed.mean())
    return mean, se, abs(mean - target) <= Z_TOL * se


def ozarow_scheme(seed, pool, n=200, P1=1.0, P2=1.0, eps=0.1, trials=10_000):
    params = mac_codes.ozarow_params(n, P1, P2, eps)
    code = mac_codes.build_ozarow_code(params)
    s = scenario_seed(seed, "ozarow")
    tot = _ozarow_sums(code, trials, s, pool)
    abort = channel.McEstimate.from_counts(tot["aborts"], trials, s)
    err = channel.McEstimate.from_counts(tot["errors"], trials, s)
    target = params.abort_probability
    power_ok = {}
    powers = []
    for j, Pj in enumerate((P1, P2)):
        mean = tot["s1"][j] / trials
        var = max(tot["s2"][j] / trials - mean * mean, 0.0) * trials / (trials - 1)
        powers.append(mean)
        power_ok[f"power{j + 1}_within_budget"] = mean <= Pj + Z_TOL * math.sqrt(var / trials)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        in_stats = channel.stats_from_sums(tot["inputs"])
        err_stats = channel.stats_from_sums(tot["err"])
    ks = range(2, n + 1)
    in_mean, in_se, in_ok = _pooled_alternation(in_stats, ks, params.rho_n_star)
    er_mean, er_se, er_ok = _pooled_alternation(err_stats, ks, params.rho_n_star)
    checks = {
        "abort_rate": abs(abort.p_hat - target) <= Z_TOL * abort.se_at(target),
        "joint_error_at_most_eps": err.p_hat <= eps + Z_TOL * err.se_at(eps),
        **power_ok,
        "input_correlation_alternates": in_ok,
        "error_correlation_alternates": er_ok,
    }
    active = np.arange(2, n + 1)
    active = active[~in_stats.degenerate[active]]
    details = {
        "abort": abort.p_hat, "abort_target": target, "error": err.p_hat, "powers": powers,
        "rho_n_star": params.rho_n_star, "kappa": params.kappa_n,
        "input_pooled_signed_rho": in_mean, "input_pooled_se": in_se,
        "input_rho_mean": float(np.mean(in_stats.rho[active])),
        "error_pooled_signed_rho": er_mean, "error_pooled_se": er_se,
        "M1": code.message_counts[0], "M2": code.message_counts[1],
    }
    return _result(8, "Ozarow scheme with abort coin", checks, details)


# 9

def random_feasible_stats(rng, count=10_000, max_n=50):
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        P1, P2 = rng.uniform(0.1, 10, 2)
        p1 = rng.dirichlet(np.ones(n)) * n * P1 * rng.uniform(0.2, 1.0)
        p2 = rng.dirichlet(np.ones(n)) * n * P2 * rng.uniform(0.2, 1.0)
        rho = rng.uniform(-1, 1, n)
        yield mac_bounds.PerSymbolStats(p1, p2, rho), P1, P2


class _Poly:
    """Polynomial in independent standard normals with exact rational coefficients."""

    def __init__(self, terms):
        self.terms = {k: v for k, v in terms.items() if v != 0}

    @classmethod
    def var(cls, i, nvars, coef=Fraction(1)):
        e = [0] * nvars
        e[i] = 1
        return cls({tuple(e): Fraction(coef)})

    @classmethod
    def const(cls, c, nvars):
        return cls({(0,) * nvars: Fraction(c)})

    def __add__(self, o):
        t = dict(self.terms)
        for k, v in o.terms.items():
            t[k] = t.get(k, 0) + v
        return _Poly(t)

    def __sub__(self, o):
        return self + o * Fraction(-1)

    def __mul__(self, o):
        if not isinstance(o, _Poly):
            return _Poly({k: v * Fraction(o) for k, v in self.terms.items()})
        t = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in o.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                t[k] = t.get(k, 0) + v1 * v2
        return _Poly(t)

    __rmul__ = __mul__

    def expectation(self) -> Fraction:
        total = Fraction(0)
        for k, v in self.terms.items():
            m = Fraction(1)
            for e in k:
                if e % 2:
                    m = Fraction(0)
                    break
                m *= math.prod(range(e - 1, 0, -2)) if e else 1
            total += v * m
        return total


def exact_v_second_moments(s1, s2, a, b, P1, P2, rho, T):
    """Exact ``E[V_j^2]`` at blocklength one.

    Inputs are ``X1 = s1 U`` and ``X2 = s2 (a U + b U')`` with ``a^2 + b^2 = 1``,
    independent of the noise ``Z``; ``P1`` and ``P2`` must be rational squares.
    """
    U, U2, Z = (_Poly.var(i, 3) for i in range(3))
    one = _Poly.const(1, 3)
    x1 = U * s1
    x2 = (U * a + U2 * b) * s2
    c12, c21 = s1 * a / s2, s2 * a / s1
    sq = Fraction(math.isqrt(P1.numerator * P2.numerator), math.isqrt(P1.denominator * P2.denominator))
    assert sq * sq == P1 * P2
    s = 1 - rho * rho
    zz = Z * Z
    v1 = zz * (-P1 * T * s) + Z * (x1 - x2 * c12) * 2 + one * (P1 * T * s)
    v2 = zz * (-P2 * T * s) + Z * (x2 - x1 * c21) * 2 + one * (P2 * T * s)
    tot = T * (P1 + P2 + 2 * rho * sq)
    v3 = (x1 + x2) * Z * 2 - zz * tot + one * tot
    return [(v * v).expectation() for v in (v1, v2, v3)], [v.expectation() for v in (v1, v2, v3)]


def _v_mc_check(x_fn, stats, n, T, rho, P1, P2, rng, draws):
    z = rng.standard_normal((draws, n))
    x = x_fn(z)
    v = mac_bounds.v_statistics(x, z, T, rho, stats, P1, P2)
    mom = mac_bounds.v_moments(stats, T, rho, P1, P2)
    ok = True
    out = []
    for j in range(3):
        sq = v[:, j] ** 2
        se2 = sq.std(ddof=1) / math.sqrt(draws)
        se1 = v[:, j].std(ddof=1) / math.sqrt(draws)
        ok &= abs(sq.mean() - mom.second[j]) <= Z_TOL * se2
        ok &= abs(v[:, j].mean()) <= Z_TOL * se1
        out.append((float(sq.mean()), mom.second[j], float(se2)))
    return bool(ok), out


def lemma_suite(seed, pool, trials=10_000, draws=100_000):
    rng = np.random.default_rng(scenario_seed(seed, "lemmas"))
    checks, details = {}, {}
    # single-letter correlation inequalities on random feasible statistics
    bad = 0
    for st, P1, P2 in random_feasible_stats(rng):
        if not mac_bounds.single_letter_rho(st, P1, P2).all_ok:
            bad += 1
    checks["single_letter_random"] = bad == 0
    details["single_letter_random_failures"] = bad

    # statistics and typicality events captured from the Ozarow code
    P1 = P2 = 1.0
    eps = 0.1
    params = mac_codes.ozarow_params(200, P1, P2, eps)
    code = mac_codes.build_ozarow_code(params)
    s = scenario_seed(seed, "lemmas-ozarow")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        st = channel.per_symbol_stats(code, trials, s, executor=pool)
        res = mac_bounds.single_letter_rho(st, P1, P2)
    checks["single_letter_ozarow_premises"] = res.premises_ok
    checks["single_letter_ozarow"] = res.all_ok
    details["ozarow_single_letter_rho"] = res.rho
    freqs = {}
    freq_ok = True
    for T in (1 / (1 - eps), 2 / (1 - eps)):
        def red(b, T=T):
            v = mac_bounds.atypical_statistics(b.x, T, st, P1, P2, res.rho)
            return {"hits": (v >= 0).sum(axis=0)}

        hits = channel.collect(code, trials, s, red, executor=pool)["hits"]
        ests = [channel.McEstimate.from_counts(int(h), trials, s) for h in hits]
        freqs[f"T={T:.4f}"] = [e.p_hat for e in ests]
        freq_ok &= all(e.p_hat <= 1 / T + Z_TOL * e.se_at(1 / T) for e in ests)
    checks["atypical_frequencies"] = freq_ok
    details["atypical_frequencies"] = freqs

    # closed-form moments against Monte Carlo
    n, T, rho = 8, 1.5, 0.3
    xc = rng.uniform(0.3, 1.5, (n, 2)) * rng.choice([-1, 1], (n, 2))
    det_stats = mac_bounds.PerSymbolStats(xc[:, 0] ** 2, xc[:, 1] ** 2, np.sign(xc[:, 0] * xc[:, 1]))
    scale = (float(det_stats.p1.mean()), float(det_stats.p2.mean()))
    ok_det, det_rows = _v_mc_check(lambda z: np.broadcast_to(xc, (z.shape[0], n, 2)), det_stats, n, T,
                                   rho, *scale, rng, draws)
    a = rng.uniform(-1, 1, (n, 2))
    bcoef = rng.uniform(-1, 1, (n, 2))
    bcoef[0] = 0.0

    def fb_inputs(z):
        prev = np.concatenate([np.zeros((z.shape[0], 1)), z[:, :-1]], axis=1)
        return a[None, :, :] + bcoef[None, :, :] * prev[:, :, None]

    p1 = a[:, 0] ** 2 + bcoef[:, 0] ** 2
    p2 = a[:, 1] ** 2 + bcoef[:, 1] ** 2
    fb_stats = mac_bounds.PerSymbolStats(p1, p2, (a[:, 0] * a[:, 1] + bcoef[:, 0] * bcoef[:, 1]) / np.sqrt(p1 * p2))
    ok_fb, fb_rows = _v_mc_check(fb_inputs, fb_stats, n, T, rho, float(p1.mean()), float(p2.mean()), rng, draws)
    checks["v_moments_mc_constant_inputs"] = ok_det
    checks["v_moments_mc_feedback_inputs"] = ok_fb
    details["v_moments_mc"] = {"constant": det_rows, "feedback": fb_rows}

    # exact expansion at blocklength one
    sym_ok = True
    for s1, s2, (ca, cb), P1e, P2e, r, Te in (
        (Fraction(3, 2), Fraction(1, 2), (Fraction(3, 5), Fraction(4, 5)), Fraction(9, 4), Fraction(1, 4), Fraction(1, 3), Fraction(10, 9)),
        (Fraction(1), Fraction(2), (Fraction(-5, 13), Fraction(12, 13)), Fraction(1), Fraction(4), Fraction(-1, 2), Fraction(2)),
        (Fraction(2, 3), Fraction(5, 4), (Fraction(8, 17), Fraction(15, 17)), Fraction(4, 9), Fraction(25, 16), Fraction(0), Fraction(3, 2)),
    ):
        second, first = exact_v_second_moments(s1, s2, ca, cb, P1e, P2e, r, Te)
        one = mac_bounds.PerSymbolStats([float(s1 * s1)], [float(s2 * s2)], [float(ca)])
        mom = mac_bounds.v_moments(one, float(Te), float(r), float(P1e), float(P2e))
        sym_ok &= all(f == 0 for f in first)
        sym_ok &= all(abs(float(e) - c) <= 1e-12 * max(1.0, abs(float(e))) for e, c in zip(second, mom.second))
    checks["v_moments_exact_expansion"] = sym_ok
    return _result(9, "MAC converse lemmas", checks, details)


# 10

def _boundary_samples(boundary, count=1000):
    seg = np.diff(boundary, axis=0)
    length = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    t = np.linspace(0, length[-1], count)
    return np.column_stack([np.interp(t, length, boundary[:, 0]), np.interp(t, length, boundary[:, 1])])


def mac_region(seed, pool, grid=1001):
    checks, details = {}, {}
    worst = 0.0
    for P1, P2 in ((1.0, 1.0), (2.0, 0.5), (10.0, 3.0)):
        reg = mac_bounds.region(P1, P2, 0.0, grid)
        for row in reg.pentagons():
            r = row.rho
            direct = (0.5 * math.log(1 + P1 * (1 - r * r)), 0.5 * math.log(1 + P2 * (1 - r * r)),
                      0.5 * math.log(1 + P1 + P2 + 2 * r * math.sqrt(P1 * P2)))
            worst = max(worst, max(abs(a - b) for a, b in zip(direct, (row.r1_max, row.r2_max, row.sum_max))))
    checks["eps0_matches_ozarow_region"] = worst <= 1e-9
    details["eps0_max_diff"] = worst

    nest_ok = True
    epss = (0.0, 0.1, 0.3, 0.5)
    regs = [mac_bounds.region(1.0, 1.0, e, grid) for e in epss]
    for small, large in zip(regs, regs[1:]):
        pts = _boundary_samples(small.boundary)
        nest_ok &= all(mac_bounds.contains(large, p, tol=1e-12) for p in pts)
    checks["monotone_in_eps"] = nest_ok

    sum_gap = 0.0
    for P1, P2, eps in product((0.5, 1.0, 10.0), (1.0, 3.0), epss):
        rs = mac_codes.solve_rho_star(P1, P2, eps)
        pg = mac_bounds.pentagon(P1, P2, eps, rs)
        sum_gap = max(sum_gap, abs(pg.sum_max - pg.r1_max - pg.r2_max))
    checks["sum_rate_identity_at_rho_star"] = sum_gap <= 1e-9
    details["sum_rate_gap"] = sum_gap

    ns = [10 ** k for k in range(2, 9)]
    dom_all = True
    n0s = {}
    for P1, P2, eps in ((1.0, 1.0, 0.1), (2.0, 0.5, 0.3), (10.0, 10.0, 0.5)):
        flags = []
        for n in ns:
            try:
                ach = mac_codes.message_sizes(n, P1, P2, eps)
            except Exception:
                flags.append(False)
                continue
            rn = mac_codes.solve_rho_star(P1, P2, eps, n)
            up = mac_bounds.info_spectrum_upper_bounds(n, P1, P2, eps, rn)
            flags.append(not up.vacuous and ach.ln_m1 <= up.ln_m1 and ach.ln_m2 <= up.ln_m2
                         and ach.ln_m12 <= up.ln_m12)
        n0 = None
        for n, f in zip(reversed(ns), reversed(flags)):
            if not f:
                break
            n0 = n
        n0s[f"{P1:g},{P2:g},{eps:g}"] = n0
        dom_all &= n0 is not None
    checks["converse_dominates_achievable"] = dom_all
    details["dominance_from_n"] = n0s
    return _result(10, "MAC rate region", checks, details)


CRITERIA = {
    1: capacity_goldens,
    2: sk_fidelity,
    3: power_control,
    4: truncation,
    5: su_sandwich,
    6: berry_esseen_empirical,
    7: quartic_rho,
    8: ozarow_scheme,
    9: lemma_suite,
    10: mac_region,
}


def run_criterion(number: int, seed: int = 42, pool=None) -> CriterionResult:
    start = time.perf_counter()
    res = CRITERIA[number](seed, pool)
    res.seconds = time.perf_counter() - start
    return res


def run_suite(seed: int = 42, only=None, threads: int | None = None, report=None) -> list[CriterionResult]:
    """Run the selected criteria in order; ``report`` receives each result as it finishes."""
    results = []
    with worker_pool(threads) as pool:
        for number in sorted(only or CRITERIA):
            res = run_criterion(number, seed, pool)
            results.append(res)
            if report:
                report(res)
    return results
